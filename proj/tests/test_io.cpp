#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace swrec;

TEST(DatasetIo, RoundTripWithSplit) {
  const auto dir = swtest::temp_dir("dataset_rt");
  Dataset d;
  d.matrix = build_matrix(swtest::random_matrix(60, 25, 0.2, 2).to_events(), 1, 0);
  d.split = split_users(d.matrix, 10, 10, 0.8, 4);
  save_dataset(dir, d);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.matrix, d.matrix);
  EXPECT_EQ(back.matrix.user_ids(), d.matrix.user_ids());
  EXPECT_EQ(back.fingerprint(), d.fingerprint());
  ASSERT_TRUE(back.split.has_value());
  EXPECT_EQ(back.split->spec.train_users, d.split->spec.train_users);
  EXPECT_EQ(back.split->spec.val_users, d.split->spec.val_users);
  ASSERT_EQ(back.split->test.size(), d.split->test.size());
  for (std::size_t k = 0; k < d.split->test.size(); ++k) EXPECT_EQ(back.split->test[k].holdout, d.split->test[k].holdout);
}

TEST(DatasetIo, FingerprintTracksContent) {
  Dataset a, b;
  a.matrix = swtest::random_matrix(30, 10, 0.3, 1);
  b.matrix = swtest::random_matrix(30, 10, 0.3, 2);
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(DatasetIo, BadMagicAndMissingDirectory) {
  const auto dir = swtest::temp_dir("dataset_bad");
  io::write_file(dir / "matrix.csr", "NOTACSR!garbage");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
  try {
    load_dataset(dir / "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(DatasetIo, TruncatedMatrixIsParseError) {
  std::ostringstream out(std::ios::binary);
  write_matrix(out, swtest::random_matrix(20, 10, 0.3, 3));
  const std::string bytes = out.str();
  std::istringstream in(bytes.substr(0, bytes.size() - 5), std::ios::binary);
  EXPECT_THROW(read_matrix(in, {}, {}), Error);
}

TEST(ModelIo, RoundTripIsLossless) {
  auto model = init_model<real_t>(swtest::random_mask(40, 8, 3, 1), 5, LossKind::multinomial);
  Rng rng(4);
  for (auto& w : model.layers[0].b_prime) w = static_cast<real_t>(rng.uniform());
  model.manifest_id = "abc123";
  const auto dir = swtest::temp_dir("model_rt");
  save_model(dir / "model.bin", model);
  const auto back = load_model<real_t>(dir / "model.bin");
  EXPECT_EQ(back, model);
  EXPECT_EQ(back.manifest_id, "abc123");
  EXPECT_EQ(back.seed_lineage, model.seed_lineage);
  EXPECT_TRUE(back.layers[0].decoder_is_transpose());
  EXPECT_EQ(model_bytes(back), model_bytes(model));
}

TEST(ModelIo, StackedAndUntiedModelsRoundTrip) {
  auto model = init_fc<double>(12, 5, 1);
  model = prune(model, 0.4);  // encoder and decoder patterns now differ
  auto p = std::make_shared<const BipartitePattern>(swtest::random_mask(5, 3, 2, 2).pattern);
  model.layers.push_back(init_layer<double>(p, p, 3));
  model.seed_lineage.push_back(3);
  std::istringstream in(model_bytes(model), std::ios::binary);
  const auto back = read_model<double>(in);
  EXPECT_EQ(back, model);
  EXPECT_FALSE(back.layers[0].decoder_is_transpose());
  EXPECT_EQ(back.depth(), 2u);
}

TEST(ModelIo, RejectsBadInput) {
  std::istringstream bad(std::string("SWRMODEX\x01", 9), std::ios::binary);
  try {
    read_model<double>(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
  std::string bytes = model_bytes(init_fc<double>(4, 2, 1));
  bytes[8] = 9;  // version byte
  std::istringstream ver(bytes, std::ios::binary);
  EXPECT_THROW(read_model<double>(ver), Error);
  std::istringstream cut(model_bytes(init_fc<double>(4, 2, 1)).substr(0, 40), std::ios::binary);
  EXPECT_THROW(read_model<double>(cut), Error);
  // A model written with the other scalar width is refused.
  std::istringstream width(model_bytes(init_fc<float>(4, 2, 1)), std::ios::binary);
  EXPECT_THROW(read_model<double>(width), Error);
  EXPECT_THROW(load_model<double>("/nonexistent/model.bin"), Error);
}

TEST(ClustersIo, RoundTripAndValidation) {
  const auto c = swtest::random_clusters(15, 5, 2, 3);
  const auto back = clusters_from_json(clusters_to_json(c));
  EXPECT_EQ(back.members, c.members);
  EXPECT_EQ(back.K, 5u);
  auto j = clusters_to_json(c);
  j["assignments"][0] = {1};
  EXPECT_THROW(clusters_from_json(j), Error);
  EXPECT_THROW(clusters_from_json(nlohmann::json::object()), Error);
}

TEST(EmbeddingIo, TextRoundTripIsExact) {
  Rng rng(2);
  Eigen::MatrixXd e(7, 3);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.uniform(-1, 1) * 1e-3;
  std::stringstream s;
  write_embedding(s, e);
  EXPECT_EQ(read_embedding(s), e);
  std::istringstream ragged("1 2\n3\n");
  EXPECT_THROW(read_embedding(ragged), Error);
}
