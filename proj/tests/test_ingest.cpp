#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rapi/ingest.hpp"

using namespace rapi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
};

}  // namespace

TEST(Ingest, FormatTags) {
  EXPECT_EQ(InputFormat::parse("tsv").separator, "\t");
  EXPECT_EQ(InputFormat::parse("csv").separator, ",");
  EXPECT_EQ(InputFormat::parse("movielens").kind, InputFormat::Kind::MovieLens);
  EXPECT_EQ(InputFormat::parse("delimited:|").separator, "|");
  EXPECT_THROW(InputFormat::parse("parquet"), Error);
}

TEST(Ingest, DelimitedInteractionsAndAttributes) {
  TempDir d("rapi_ingest_delim");
  const auto inter = d.write("x.tsv", "u1\ti1\t4\nu1\ti2\nu2\ti1\t1\t99\n");
  const auto attrs = d.write("a.tsv", "u1\tgender\tM\nu2\tgender\tF\nu9\tgender\tF\n");
  const auto items = d.write("m.tsv", "i1\tAlpha Movie\tDrama\ni2\tBeta\tComedy\n");
  Dataset frag = parse_interactions(inter);
  EXPECT_EQ(frag.num_interactions(), 3u);
  Dataset ds = assemble_dataset(frag, parse_attributes(attrs), parse_item_meta(items));
  EXPECT_EQ(ds.attribute("gender").num_classes(), 2);
  EXPECT_EQ(ds.item_meta()[*ds.find_item("i1")].category, "Drama");
  EXPECT_DOUBLE_EQ(ds.interactions()[0].weight, 4.0);
}

TEST(Ingest, ParseErrorsNameFileAndLine) {
  TempDir d("rapi_ingest_err");
  const auto bad = d.write("bad.tsv", "u1\ti1\nu2\n");
  try {
    parse_interactions(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.tsv:2"), std::string::npos) << e.what();
  }
  const auto neg = d.write("neg.tsv", "u1\ti1\t-3\n");
  EXPECT_THROW(parse_interactions(neg), Error);
  try {
    parse_interactions((d.path / "missing.tsv").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing.tsv"), std::string::npos);
  }
}

TEST(Ingest, MovieLensLayout) {
  TempDir d("rapi_ingest_ml");
  const auto ratings = d.write("ratings.dat", "1::10::5::978300760\n1::20::3::978302109\n2::10::4::978301968\n");
  const auto users = d.write("users.dat", "1::F::1::10::48067\n2::M::56::16::70072\n");
  const auto movies = d.write("movies.dat", "10::Toy Story (1995)::Animation|Children's|Comedy\n20::Heat (1995)::Action|Crime\n");
  const InputFormat ml = InputFormat::parse("movielens");
  Dataset ds = assemble_dataset(parse_interactions(ratings, ml), parse_attributes(users, ml),
                                parse_item_meta(movies, ml));
  EXPECT_EQ(ds.num_interactions(), 3u);
  EXPECT_EQ(ds.interactions()[0].timestamp, 978300760);
  EXPECT_TRUE(ds.has_attribute("gender"));
  EXPECT_TRUE(ds.has_attribute("age"));
  EXPECT_TRUE(ds.has_attribute("occupation"));
  EXPECT_EQ(ds.item_meta()[*ds.find_item("10")].category, "Animation");
}

TEST(Ingest, DatasetRoundTripKeepsIndexOrder) {
  SyntheticSpec spec;
  spec.n_users = 40;
  spec.n_items = 30;
  spec.interactions_per_user = 5;
  Dataset ds = generate_synthetic(spec, 3).dataset;
  TempDir d("rapi_ingest_rt");
  write_dataset(d.path.string(), ds);
  Dataset back = read_dataset(d.path.string());
  EXPECT_EQ(back.user_ids(), ds.user_ids());
  EXPECT_EQ(back.item_ids(), ds.item_ids());
  ASSERT_EQ(back.num_interactions(), ds.num_interactions());
  for (std::size_t i = 0; i < ds.num_interactions(); ++i) {
    EXPECT_EQ(back.interactions()[i].user, ds.interactions()[i].user);
    EXPECT_EQ(back.interactions()[i].item, ds.interactions()[i].item);
  }
  EXPECT_EQ(back.attribute("gender").codes, ds.attribute("gender").codes);
  EXPECT_EQ(back.item_meta()[3].title, ds.item_meta()[3].title);
}

TEST(HashEmbedding, DeterministicNormalizedAndEmptySafe) {
  std::vector<ItemMeta> meta = {{"Heat", "a"}, {"heat", "b"}, {"", "c"}, {"Toy Story", "d"}};
  std::size_t empty = 0;
  EmbeddingTable t = hash_embed_titles(meta, 32, 9, &empty);
  EXPECT_EQ(empty, 1u);
  EXPECT_EQ(t[0], t[1]);  // case-insensitive
  EXPECT_NEAR(t[0].norm(), 1.0, 1e-12);
  EXPECT_EQ(t[2].norm(), 0.0);
  EXPECT_NE(t[0], t[3]);
  EmbeddingTable again = hash_embed_titles(meta, 32, 9);
  EXPECT_EQ(again.matrix(), t.matrix());
  EXPECT_THROW(hash_embed_titles(meta, 4, 9), Error);
}

TEST(Synthetic, PlantedStructure) {
  SyntheticSpec spec;
  SyntheticData a = generate_synthetic(spec, 5);
  SyntheticData b = generate_synthetic(spec, 5);
  EXPECT_EQ(a.dataset.num_users(), 500u);
  EXPECT_EQ(a.dataset.num_items(), 200u);
  EXPECT_EQ(a.dataset.num_interactions(), 500u * 30u);
  EXPECT_EQ(a.user_cluster, b.user_cluster);
  // Share of interactions inside the user's own cluster is close to the affinity.
  std::size_t inside = 0;
  for (const auto& x : a.dataset.interactions()) {
    inside += a.user_cluster[x.user] == a.item_cluster[x.item];
  }
  EXPECT_NEAR(static_cast<double>(inside) / a.dataset.num_interactions(), 0.9, 0.02);
  // Without noise the label equals the cluster.
  const auto& col = a.dataset.attribute("gender");
  for (std::size_t u = 0; u < a.dataset.num_users(); ++u) {
    EXPECT_EQ(col.labels[col.codes[u]], "c" + std::to_string(a.user_cluster[u]));
  }
  spec.cluster_affinity = 1.5;
  EXPECT_THROW(generate_synthetic(spec, 1), Error);
}
