#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support/finite_difference.hpp"
#include "topomatch/model.hpp"

using namespace topomatch;

namespace {

Vocabulary letters(const std::string& chars) {
  std::set<char32_t> s;
  for (char32_t c : text::to_u32(chars)) s.insert(c);
  return Vocabulary::from_chars(s);
}

EncodedString enc(const std::string& raw, const Vocabulary& v, int max_len = 120) {
  PreprocessOptions o;
  o.max_seq_len = max_len;
  return *prepare(raw, v, o);
}

ModelConfig tiny_config(RnnType type = RnnType::gru, bool bidirectional = true, int layers = 2) {
  ModelConfig c;
  c.rnn_type = type;
  c.embedding_dim = 4;
  c.hidden_dim = 4;
  c.ff_hidden_dim = 4;
  c.num_layers = layers;
  c.bidirectional = bidirectional;
  c.dropout_p = 0.0;
  return c;
}

}  // namespace

TEST(CountParams, DefaultNonEmbeddingPortion) {
  const ModelConfig cfg;
  EXPECT_EQ(count_params(cfg, 0), 124081u);
  EXPECT_EQ(count_params(cfg, 7784), 591121u);
}

TEST(CountParams, TinyConfigMatchesEnumeration) {
  ModelConfig cfg;
  cfg.embedding_dim = 1;
  cfg.hidden_dim = 1;
  cfg.num_layers = 1;
  cfg.bidirectional = false;
  cfg.ff_hidden_dim = 2;
  // V*E = 2; GRU 3*(1*1) + 3*(1*1) + 2*3 = 12; ff 1*2 + 2 = 4; out 2 + 1 = 3.
  EXPECT_EQ(count_params(cfg, 2), 21u);
  Vocabulary v = Vocabulary::from_chars({});
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(enumerate_params(init_model<float>(cfg, v, 1).params), 21u);
}

TEST(CountParams, ClosedFormAgreesWithBuiltModelAcrossVariants) {
  const Vocabulary v = letters("abcdefg|");
  for (auto type : {RnnType::gru, RnnType::lstm, RnnType::rnn}) {
    for (bool bi : {false, true}) {
      for (int layers : {1, 3}) {
        ModelConfig cfg = tiny_config(type, bi, layers);
        cfg.embedding_dim = 5;
        cfg.ff_hidden_dim = 7;
        EXPECT_EQ(enumerate_params(init_model<float>(cfg, v, 3).params), count_params(cfg, v.size()));
      }
    }
  }
}

TEST(InitModel, DeterministicAndPadRowZero) {
  const Vocabulary v = letters("abc|");
  const ModelConfig cfg;
  const auto a = init_model<float>(cfg, v, 42);
  const auto b = init_model<float>(cfg, v, 42);
  const auto c = init_model<float>(cfg, v, 43);
  std::vector<float> fa, fb, fc;
  a.params.for_each([&](const std::string&, const auto& t) { fa.insert(fa.end(), t.data(), t.data() + t.size()); });
  b.params.for_each([&](const std::string&, const auto& t) { fb.insert(fb.end(), t.data(), t.data() + t.size()); });
  c.params.for_each([&](const std::string&, const auto& t) { fc.insert(fc.end(), t.data(), t.data() + t.size()); });
  EXPECT_EQ(fa, fb);
  EXPECT_NE(fa, fc);
  EXPECT_TRUE(a.params.embedding.row(Vocabulary::kPad).isZero(0.0f));

  const float bound = 1.0f / std::sqrt(60.0f);
  EXPECT_LE(a.params.recurrent[0].w_ih.cwiseAbs().maxCoeff(), bound);
  EXPECT_LE(a.params.embedding.cwiseAbs().maxCoeff(), 0.1f);
}

TEST(Combine, Examples) {
  Vec<double> h1(3), h2(3);
  h1 << 0.5, 0.1, -0.3;
  h2 << -0.5, 0.1, 0.2;
  const auto c = combine(h1, h2);
  EXPECT_DOUBLE_EQ(c(0), 0.0);
  EXPECT_DOUBLE_EQ(c(1), 1.0);
  EXPECT_EQ(combine(h1, h1), Vec<double>::Ones(3));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Vec<float> a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a(i) = static_cast<float>(rng.uniform(-1, 1));
      b(i) = static_cast<float>(rng.uniform(-1, 1));
    }
    EXPECT_EQ(combine(a, b), combine(b, a));
  }
  EXPECT_THROW(combine(Vec<double>(2), Vec<double>(3)), ConsistencyError);
}

TEST(LossBce, ClosedForms) {
  EXPECT_NEAR(loss_bce(0.5, true), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss_bce(1.0 - 1e-7, true), 1e-7, 1e-12);
  EXPECT_NEAR(loss_bce(1e-7, true), 16.11809565, 1e-6);
  EXPECT_NEAR(loss_bce(0.0, true), loss_bce(1e-7, true), 1e-12);
  EXPECT_GE(loss_bce(0.3, false), 0.0);
}

TEST(EncodeString, PaddingNeverInfluencesResult) {
  const Vocabulary v = letters("abcdefghijklmnopqrstuvwxyz|");
  const auto model = init_model<float>(ModelConfig{}, v, 5);
  const auto short_pad = enc("london", v, 10);
  const auto long_pad = enc("london", v, 120);
  ASSERT_EQ(short_pad.true_length, long_pad.true_length);
  const Vec<float> a = encode_string(model, short_pad);
  const Vec<float> b = encode_string(model, long_pad);
  ASSERT_EQ(a.size(), 120);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(float) * 120));

  // Garbage beyond true_length is ignored.
  auto dirty = long_pad;
  for (std::size_t i = static_cast<std::size_t>(dirty.true_length); i < dirty.indices.size(); ++i) dirty.indices[i] = 5;
  const Vec<float> c = encode_string(model, dirty);
  EXPECT_EQ(0, std::memcmp(a.data(), c.data(), sizeof(float) * 120));
}

TEST(EncodeString, MarkerOnlyAndBoundedOutputs) {
  const Vocabulary v = letters("abc|");
  const auto model = init_model<float>(ModelConfig{}, v, 9);
  EncodedString marker_only;
  marker_only.indices.assign(120, 0);
  marker_only.indices[0] = v.index_of(U'|');
  marker_only.true_length = 1;
  const auto out = encode_string(model, marker_only);
  EXPECT_EQ(out.size(), 120);
  EXPECT_TRUE(out.allFinite());
  for (const char* s : {"a", "abcabcabc", "cab"}) {
    const auto h = encode_string(model, enc(s, v));
    EXPECT_LT(h.cwiseAbs().maxCoeff(), 1.0f);
  }
}

TEST(EncodeString, NonFiniteParametersRaiseNumericError) {
  const Vocabulary v = letters("ab|");
  auto model = init_model<float>(ModelConfig{}, v, 1);
  model.params.recurrent[2].w_hh(0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    encode_string(model, enc("ab", v));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("recurrent layer 1"), std::string::npos);
  }
}

TEST(ClassifyPair, SymmetricAndSelfPairConstant) {
  const Vocabulary v = letters("abcdefghijklmnopqrstuvwxyz|");
  const auto model = init_model<float>(ModelConfig{}, v, 11);
  const auto a = enc("paris", v), b = enc("parigi", v), c = enc("london", v);
  EXPECT_EQ(classify_pair(model, a, b), classify_pair(model, b, a));
  EXPECT_EQ(classify_pair(model, a, a), classify_pair(model, c, c));
  const float p = classify_pair(model, a, c);
  EXPECT_GT(p, 0.0f);
  EXPECT_LT(p, 1.0f);
}

TEST(ClassifyPair, UntrainedModelIsNearChanceOnBalancedPairs) {
  const Vocabulary v = letters("abcdefghij|");
  const auto model = init_model<float>(ModelConfig{}, v, 2);
  Rng rng(99);
  auto random_word = [&] {
    std::string s;
    const auto n = 3 + rng.below(8);
    for (std::uint64_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng.below(10)));
    return s;
  };
  int correct = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const bool label = i % 2 == 0;
    const std::string w = random_word();
    const std::string other = label ? w : random_word();
    const bool pred = classify_pair(model, enc(w, v), enc(other, v)) >= 0.5f;
    correct += pred == label;
  }
  EXPECT_NEAR(static_cast<double>(correct) / n, 0.5, 0.1);
}

TEST(WeightSharing, BothBranchesReadOneStorage) {
  const Vocabulary v = letters("abc|");
  auto model = init_model<double>(tiny_config(), v, 4);
  EXPECT_EQ(&model.branch_parameters(0), &model.branch_parameters(1));
  const auto x = enc("abc", v, 8);
  const auto before = encode_string(model, x);
  model.branch_parameters(0).recurrent[0].w_ih(0, 0) += 0.5;
  const auto after_second_branch = encode_string(model, x);
  EXPECT_NE(before, after_second_branch);
  EXPECT_EQ(model.branch_parameters(1).recurrent[0].w_ih(0, 0), model.params.recurrent[0].w_ih(0, 0));
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<RnnType, bool, std::uint64_t>> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  const auto [type, with_dropout, seed] = GetParam();
  ModelConfig cfg = tiny_config(type);
  cfg.dropout_p = with_dropout ? 0.2 : 0.0;
  const Vocabulary v = letters("abc|");  // V = 6
  ASSERT_EQ(v.size(), 6u);
  const auto model = init_model<double>(cfg, v, seed);
  Rng rng(seed * 31 + 7);
  const auto batch = oracle::random_batch(v.size(), 5, 3, rng);
  const std::uint64_t dropout_seed = seed + 1000;
  const auto cmp = oracle::compare_gradients(model, batch, with_dropout ? &dropout_seed : nullptr);
  EXPECT_EQ(cmp.checked, count_params(cfg, v.size()));
  EXPECT_LT(cmp.max_relative_error, 1e-4) << "worst at " << cmp.worst_tensor;
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck,
                         ::testing::Combine(::testing::Values(RnnType::gru, RnnType::lstm, RnnType::rnn),
                                            ::testing::Bool(), ::testing::Values(1u, 2u, 3u, 4u, 5u)));

TEST(BackwardAndStep, DeterministicGivenStateAndRng) {
  ModelConfig cfg = tiny_config();
  cfg.dropout_p = 0.1;
  const Vocabulary v = letters("abc|");
  Rng data_rng(3);
  const auto batch = oracle::random_batch(v.size(), 5, 8, data_rng);
  auto run = [&] {
    auto model = init_model<float>(cfg, v, 17);
    auto adam = AdamState<float>::for_model(model);
    Rng rng(5);
    for (int i = 0; i < 3; ++i) backward_and_step<float>(model, adam, batch, 0.01, &rng);
    return model;
  };
  const auto a = run();
  const auto b = run();
  std::vector<float> fa, fb;
  a.params.for_each([&](const std::string&, const auto& t) { fa.insert(fa.end(), t.data(), t.data() + t.size()); });
  b.params.for_each([&](const std::string&, const auto& t) { fb.insert(fb.end(), t.data(), t.data() + t.size()); });
  EXPECT_EQ(fa, fb);
}

TEST(BackwardAndStep, LossDecreasesOnFixedBatch) {
  ModelConfig cfg = tiny_config();
  const Vocabulary v = letters("abc|");
  Rng data_rng(8);
  // Learnable labels: identical strings match, different strings do not.
  auto batch = oracle::random_batch(v.size(), 5, 8, data_rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i % 2 == 0) {
      batch[i].second = batch[i].first;
      batch[i].label = true;
    } else {
      batch[i].label = batch[i].first == batch[i].second;
    }
  }
  auto model = init_model<double>(cfg, v, 21);
  auto adam = AdamState<double>::for_model(model);
  double previous = oracle::batch_loss(model, batch, nullptr);
  const double initial = previous;
  for (int step = 0; step < 50; ++step) {
    backward_and_step<double>(model, adam, batch, 0.01, nullptr);
    const double now = oracle::batch_loss(model, batch, nullptr);
    // Adam is not a descent method; allow sub-1e-5 wobbles between steps.
    EXPECT_LT(now, previous + 1e-5) << "step " << step;
    previous = now;
  }
  EXPECT_LT(previous, initial - 0.1);
}

TEST(BackwardAndStep, PadEmbeddingRowStaysZero) {
  const Vocabulary v = letters("abc|");
  auto model = init_model<float>(tiny_config(), v, 1);
  auto adam = AdamState<float>::for_model(model);
  Rng data_rng(2);
  const auto batch = oracle::random_batch(v.size(), 5, 4, data_rng);
  for (int i = 0; i < 5; ++i) backward_and_step<float>(model, adam, batch, 0.01, nullptr);
  EXPECT_TRUE(model.params.embedding.row(Vocabulary::kPad).isZero(0.0f));
}
