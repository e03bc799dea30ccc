#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rapi/dataset.hpp"
#include "rapi/embedding.hpp"
#include "rapi/random.hpp"

using namespace rapi;
namespace fs = std::filesystem;

namespace {

Dataset small_dataset() {
  DatasetBuilder b;
  b.add_interaction("u1", "i1", 1.0);
  b.add_interaction("u1", "i2", 2.0);
  b.add_interaction("u2", "i1", 1.0);
  b.add_interaction("u3", "i3", 1.0);
  b.add_interaction("u1", "i2", 5.0);  // duplicate, keeps the larger weight
  b.set_attribute("u1", "gender", "M");
  b.set_attribute("u2", "gender", "F");
  b.set_attribute("ghost", "gender", "F");
  return std::move(b).build();
}

Dataset grid_dataset(int users, int items_per_user, int items) {
  DatasetBuilder b;
  for (int u = 0; u < users; ++u) {
    for (int j = 0; j < items_per_user; ++j) {
      b.add_interaction("u" + std::to_string(u), "i" + std::to_string((u * 7 + j * 3) % items));
    }
  }
  return std::move(b).build();
}

}  // namespace

TEST(Seeds, DerivedStageSeedsAreDistinctAndStable) {
  SeedPolicy a{7}, b{7}, c{8};
  EXPECT_EQ(a.split(), b.split());
  EXPECT_NE(a.split(), a.partition());
  EXPECT_NE(a.model_init(), a.classifier());
  EXPECT_NE(a.split(), c.split());
}

TEST(Dataset, BuilderCollapsesDuplicatesAndDropsUnknownUsers) {
  DatasetBuilder b;
  b.add_interaction("u1", "i1", 1.0);
  b.add_interaction("u1", "i1", 3.0);
  b.set_attribute("nobody", "gender", "F");
  Dataset ds = std::move(b).build();
  ASSERT_EQ(ds.num_interactions(), 1u);
  EXPECT_DOUBLE_EQ(ds.interactions()[0].weight, 3.0);

  Dataset s = small_dataset();
  EXPECT_EQ(s.num_users(), 3u);
  EXPECT_EQ(s.num_items(), 3u);
  EXPECT_EQ(s.num_interactions(), 4u);
  const auto& g = s.attribute("gender");
  ASSERT_EQ(g.labels, (std::vector<std::string>{"F", "M"}));
  EXPECT_EQ(g.codes[*s.find_user("u1")], 1);
  EXPECT_EQ(g.codes[*s.find_user("u2")], 0);
  EXPECT_EQ(g.codes[*s.find_user("u3")], -1);
  EXPECT_NEAR(s.density(), 4.0 / 9.0, 1e-15);
}

TEST(Dataset, RejectsBadWeightsAndConflictingLabels) {
  DatasetBuilder b;
  EXPECT_THROW(b.add_interaction("u", "i", -1.0), Error);
  EXPECT_THROW(b.add_interaction("u", "i", std::nan("")), Error);
  b.add_interaction("u", "i");
  b.set_attribute("u", "gender", "M");
  b.set_attribute("u", "gender", "F");
  EXPECT_THROW(std::move(b).build(), Error);
  EXPECT_THROW(small_dataset().attribute("age"), Error);
}

TEST(Dataset, FilterRareItemsDropsSingletons) {
  Dataset s = small_dataset();
  Dataset f = filter_rare_items(s, 1);
  // i1 has two interactions; i2 and i3 have one each.
  EXPECT_EQ(f.num_items(), 1u);
  EXPECT_EQ(f.num_users(), 2u);
  EXPECT_EQ(f.num_interactions(), 2u);
  EXPECT_TRUE(f.has_attribute("gender"));
}

TEST(Split, SizesFollowRatiosAndCoverEveryInteraction) {
  Dataset ds = grid_dataset(40, 10, 60);
  const std::size_t n = ds.num_interactions();
  Split s = split_dataset(ds, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(s.validation.size(), n / 10);
  EXPECT_EQ(s.test.size(), n / 10);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), n);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), n);
  EXPECT_EQ(split_dataset(ds, {0.8, 0.1, 0.1}, 3).train, s.train);
  EXPECT_THROW(split_dataset(ds, {0.8, 0.1, 0.2}, 3), Error);
  EXPECT_THROW(split_dataset(Dataset(), {0.8, 0.1, 0.1}, 3), Error);
}

TEST(Partition, SizesAndComplement) {
  Dataset ds = grid_dataset(100, 5, 50);
  for (double alpha : {0.0, 0.1, 0.5, 1.0}) {
    for (double beta : {0.0, 0.3, 0.9}) {
      ProviderPartition p = partition_providers(ds, alpha, beta, 11);
      EXPECT_EQ(p.interaction_providers.size(), static_cast<std::size_t>(alpha * 100 + 1e-9));
      EXPECT_EQ(p.attribute_providers.size(), static_cast<std::size_t>(beta * 100 + 1e-9));
      EXPECT_EQ(p.attribute_providers.size() + p.target_users.size(), 100u);
      std::vector<UserIndex> overlap;
      std::set_intersection(p.attribute_providers.begin(), p.attribute_providers.end(),
                            p.target_users.begin(), p.target_users.end(), std::back_inserter(overlap));
      EXPECT_TRUE(overlap.empty());
    }
  }
  EXPECT_THROW(partition_providers(ds, 1.5, 0.5, 1), Error);
}

TEST(Partition, ItemPartitionFollowsProviders) {
  Dataset ds = grid_dataset(30, 4, 40);
  ProviderPartition p = partition_providers(ds, 0.2, 0.5, 5);
  ItemPartition items = derive_item_partition(ds, p);
  EXPECT_EQ(items.related.size() + items.unrelated.size(), ds.num_items());
  std::set<ItemIndex> touched;
  std::set<UserIndex> providers(p.interaction_providers.begin(), p.interaction_providers.end());
  for (const auto& x : ds.interactions()) {
    if (providers.count(x.user)) touched.insert(x.item);
  }
  EXPECT_EQ(std::vector<ItemIndex>(touched.begin(), touched.end()), items.related);

  Split s = split_dataset(ds, {0.8, 0.1, 0.1}, 1);
  Split r = restrict_split(ds, s, p.interaction_providers);
  for (auto i : r.train) EXPECT_TRUE(providers.count(ds.interactions()[i].user));
}

TEST(EmbeddingTable, LookupAndErrors) {
  Matrix rows(2, 3);
  rows << 1, 2, 3, 4, 5, 6;
  EmbeddingTable t({10, 20}, rows);
  EXPECT_EQ(t.dim(), 3);
  EXPECT_EQ(t[20](1), 5.0);
  EXPECT_THROW(t[30], Error);
  EXPECT_THROW(EmbeddingTable({1, 1}, rows), Error);
  EXPECT_EQ(t.select({20}).size(), 1u);
}

TEST(EmbeddingTable, FileRoundTripAndParseErrors) {
  const fs::path dir = fs::temp_directory_path() / "rapi_core_emb";
  fs::create_directories(dir);
  Matrix rows(2, 2);
  rows << 0.1, 1.0 / 3.0, -2.5e-7, 4.0;
  EmbeddingTable t({3, 7}, rows);
  write_embedding_table((dir / "t.emb").string(), t);
  EmbeddingTable back = load_embedding_table((dir / "t.emb").string());
  EXPECT_EQ(back.ids(), t.ids());
  EXPECT_EQ(back.matrix(), t.matrix());  // exact round trip

  std::ofstream(dir / "arity.emb") << "2 3\n1 0.5 0.5 0.5\n2 1 2\n";
  try {
    load_embedding_table((dir / "arity.emb").string());
    FAIL() << "expected an arity error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("arity.emb:3"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "nan.emb") << "1 2\n1 nan 0\n";
  EXPECT_THROW(load_embedding_table((dir / "nan.emb").string()), Error);
  std::ofstream(dir / "dup.emb") << "2 1\n1 0\n1 2\n";
  EXPECT_THROW(load_embedding_table((dir / "dup.emb").string()), Error);
  fs::remove_all(dir);
}
