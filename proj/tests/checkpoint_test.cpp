#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "nevae/checkpoint.h"
#include "nevae/error.h"

namespace nevae {
namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.hyper = Hyperparams::molecule_defaults();
  c.hyper.negatives = 7;
  c.hyper.seed = 99;
  c.hyper.source = SourceKind::kDegree;
  c.hyper.mask = MaskConfig::triangle_free_only();
  c.params = ModelParams::init(c.hyper.dims, 5);
  c.params.lambda_n = 9.123456789012345;
  c.params.encoder.hop_weights[0](0, 0) = 1.0 / 3.0;
  c.iteration = 500;
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  const Checkpoint d = read_checkpoint(ss);
  EXPECT_EQ(d.iteration, 500u);
  EXPECT_EQ(d.params.lambda_n, c.params.lambda_n);
  EXPECT_EQ(d.hyper.negatives, 7u);
  EXPECT_EQ(d.hyper.seed, 99u);
  EXPECT_EQ(d.hyper.source, SourceKind::kDegree);
  EXPECT_EQ(mask_config_name(d.hyper.mask), "triangle-free");
  const auto a = c.params.tensors(), b = d.params.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);

  const MolecularGraph g = generate_desk_corpus(1, 12, 1)[0];
  Hyperparams h = c.hyper;
  h.mask = MaskConfig::valence_only();
  EXPECT_EQ(elbo_value(g, c.params, h, 3), elbo_value(g, d.params, h, 3));

  std::stringstream again;
  write_checkpoint(again, d);
  std::stringstream first;
  write_checkpoint(first, c);
  EXPECT_EQ(first.str(), again.str());
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "nevae_checkpoint_test.ckpt";
  save_checkpoint(path.string(), sample_checkpoint());
  const Checkpoint d = load_checkpoint(path.string());
  EXPECT_EQ(d.iteration, 500u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), InputError);
}

TEST(Checkpoint, CorruptionDetected) {
  std::stringstream ss;
  write_checkpoint(ss, sample_checkpoint());
  const std::string bytes = ss.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(read_checkpoint(a), InputError);

  std::string bad_version = bytes;
  bad_version[8] = 7;
  std::istringstream b(bad_version);
  EXPECT_THROW(read_checkpoint(b), InputError);

  for (std::size_t cut : {4ul, 12ul, 40ul, bytes.size() / 2, bytes.size() - 3}) {
    std::istringstream t(bytes.substr(0, cut));
    EXPECT_THROW(read_checkpoint(t), InputError) << "cut at " << cut;
  }

  // Metadata claiming a different hidden width no longer fits the tensors.
  std::string wrong_dims = bytes;
  const auto pos = wrong_dims.find("\"hidden\":16");
  ASSERT_NE(pos, std::string::npos);
  wrong_dims.replace(pos, 11, "\"hidden\":17");
  std::istringstream c(wrong_dims);
  EXPECT_THROW(read_checkpoint(c), InputError);
}

}  // namespace
}  // namespace nevae
