#include "promptforge/error.hpp"
#include "promptforge/prompts.hpp"

#include "../support/fd_oracle.hpp"
#include "../support/trained.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace promptforge;
using namespace promptforge::prompts;
using numerics::RngStream;

namespace {

const teacher::TeacherModel& T() { return pftest::trained_teacher().model; }

std::vector<std::string> cats() { return world::default_world().category_names(); }

TEST(MixPrompt, ClosedForms) {
  const Tensor a = Tensor::row({1.0, 0.0}), b = Tensor::row({0.0, 1.0});
  EXPECT_TRUE(mix_prompt(a, b, 1.0) == a);
  EXPECT_TRUE(mix_prompt(a, a, 0.3) == a);
  const Tensor m = mix_prompt(a, b, 0.5);
  EXPECT_NEAR(m[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m[1], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(mix_prompt(a, b, 1.5), ValidationError);
  EXPECT_THROW(mix_prompt(a, b, -0.1), ValidationError);
}

TEST(CodebookStats, ClosedFormsAndTwoPassAgreement) {
  const auto s = estimate_codebook_stats(Tensor({2, 2}, {0, 0, 2, 2}));
  EXPECT_EQ(s.mean, (std::vector<double>{1, 1}));
  EXPECT_EQ(s.stddev, (std::vector<double>{1, 1}));
  const auto one = estimate_codebook_stats(Tensor({1, 3}, {4, 5, 6}));
  EXPECT_EQ(one.mean, (std::vector<double>{4, 5, 6}));
  EXPECT_EQ(one.stddev, (std::vector<double>{0, 0, 0}));
  const auto same = estimate_codebook_stats(Tensor({3, 2}, {7, -1, 7, -1, 7, -1}));
  EXPECT_EQ(same.stddev, (std::vector<double>{0, 0}));

  const Tensor& C = T().codebook;
  const auto st = estimate_codebook_stats(C);
  for (std::size_t d = 0; d < C.cols(); ++d) {
    double m = 0;
    for (std::size_t k = 0; k < C.rows(); ++k) m += C.at(k, d);
    m /= static_cast<double>(C.rows());
    double v = 0;
    for (std::size_t k = 0; k < C.rows(); ++k) v += (C.at(k, d) - m) * (C.at(k, d) - m);
    v /= static_cast<double>(C.rows());
    EXPECT_NEAR(st.mean[d], m, 1e-12);
    EXPECT_NEAR(st.stddev[d], std::sqrt(v), 1e-12);
  }
}

TEST(PseudoToken, FormulaReplayAndSpread) {
  const auto st = estimate_codebook_stats(T().codebook);
  RngStream s0(1, "p");
  const auto zero = sample_pseudo_token(st, 0.0, s0);
  for (std::size_t d = 0; d < st.mean.size(); ++d) EXPECT_EQ(zero.value[d], st.mean[d]);

  RngStream s10(2, "p");
  const auto t = sample_pseudo_token(st, 10.0, s10);
  EXPECT_EQ(t.provenance, "random");
  for (std::size_t d = 0; d < st.mean.size(); ++d)
    EXPECT_DOUBLE_EQ(t.value[d], st.mean[d] + 10.0 * t.eps[d] * st.stddev[d]);

  RngStream many(3, "p");
  const std::size_t D = st.mean.size();
  std::vector<double> s1(D, 0), s2(D, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto v = sample_pseudo_token(st, 10.0, many);
    for (std::size_t d = 0; d < D; ++d) s1[d] += v.value[d], s2[d] += v.value[d] * v.value[d];
  }
  for (std::size_t d = 0; d < D; ++d) {
    const double m = s1[d] / n, sd = std::sqrt(s2[d] / n - m * m);
    EXPECT_NEAR(sd / (10.0 * st.stddev[d]), 1.0, 0.05);
  }
  EXPECT_THROW(sample_pseudo_token(st, -1.0, many), ValidationError);
}

TEST(ComposePrompt, UnitNormDistinctAndReducesToRealText) {
  const auto& t = T();
  RngStream rng(4, "v");
  const Tensor v1 = numerics::sample_gaussian(rng, {1, t.dims.token_dim});
  const Tensor v2 = numerics::sample_gaussian(rng, {1, t.dims.token_dim});
  const Tensor a = compose_prompt("disc", v1, t), b = compose_prompt("disc", v2, t);
  double n = 0;
  for (double x : a.values()) n += x * x;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  EXPECT_FALSE(a == b);
  // Filling the slot with the codebook row of 'c' is the sentence ending in "c".
  const Tensor c_row = t.codebook.row_copy(*t.tokenizer.id('c'));
  EXPECT_TRUE(compose_prompt("disc", c_row, t) == t.encode_text("disc in the style of c"));
}

TEST(Augment, RecordedPermutationReplays) {
  const std::vector<std::vector<std::size_t>> perms{{1, 0}, {1, 0, 2}, {2, 1, 0, 3, 4}, {1, 0}};
  EXPECT_EQ(apply_template_permutation("disc in the style of *", perms), "disc ni hte ytsle fo *");
  const std::vector<std::vector<std::size_t>> id{{0, 1}, {0, 1, 2}, {0, 1, 2, 3, 4}, {0, 1}};
  EXPECT_EQ(apply_template_permutation("disc in the style of *", id), "disc in the style of *");
}

TEST(Augment, ShufflePreservesMultisetAndFixedParts) {
  RngStream rng(5, "aug");
  const std::string src = "double-ring in the style of *";
  for (int i = 0; i < 50; ++i) {
    const auto out = shuffle_template_augment(src, rng);
    ASSERT_EQ(out.size(), src.size());
    EXPECT_EQ(out.substr(0, 12), "double-ring ");
    EXPECT_EQ(out.back(), '*');
    auto x = out, y = src;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    EXPECT_EQ(x, y);
  }
  const auto sub = substitute_template_augment(src, rng);
  EXPECT_EQ(sub.substr(0, 12), "double-ring ");
  EXPECT_EQ(sub.back(), '*');
  EXPECT_THROW(shuffle_template_augment("a disc", rng), ValidationError);
}

TEST(ContrastiveLoss, ClosedForms) {
  const std::vector<double> a{1, 0}, p{1, 0}, n0{0, 1};
  EXPECT_NEAR(contrastive_prompt_loss(a, p, {n0}, 1.0), std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(contrastive_prompt_loss(a, p, {p}, 0.1), std::log(2.0), 1e-12);
  EXPECT_NEAR(contrastive_prompt_loss(a, p, {p, p, p}, 0.1), std::log(4.0), 1e-12);
  const std::vector<double> closer{std::cos(0.2), std::sin(0.2)}, further{std::cos(0.5), std::sin(0.5)};
  EXPECT_LT(contrastive_prompt_loss(a, closer, {n0}, 0.1), contrastive_prompt_loss(a, further, {n0}, 0.1));
  EXPECT_THROW(contrastive_prompt_loss(a, p, {n0}, 0.0), ValidationError);
}

TEST(ContrastiveLoss, TapeMatchesPlainAndMaskExcludes) {
  RngStream rng(6, "cl");
  Tensor A = numerics::sample_gaussian(rng, {3, 4}), P = numerics::sample_gaussian(rng, {3, 4}),
         N = numerics::sample_gaussian(rng, {5, 4});
  for (auto* t : {&A, &P, &N})
    for (std::size_t r = 0; r < t->rows(); ++r) {
      double s = 0;
      for (double x : t->row_span(r)) s += x * x;
      for (double& x : t->row_span(r)) x /= std::sqrt(s);
    }
  Tensor mask(numerics::Shape{3, 5}, 1.0);
  mask.at(0, 1) = 0.0;
  Tape tape;
  const double v = tape.scalar(
      contrastive_prompt_loss(tape, tape.constant(A), tape.constant(P), tape.constant(N), mask, 0.1));
  double expect = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<std::span<const double>> negs;
    for (std::size_t k = 0; k < 5; ++k)
      if (mask.at(r, k) > 0) negs.push_back(N.row_span(k));
    expect += contrastive_prompt_loss(A.row_span(r), P.row_span(r), negs, 0.1);
  }
  EXPECT_NEAR(v, expect / 3.0, 1e-10);
}

TEST(ContrastiveLoss, GradientWrtPseudoTokenMatchesFiniteDifferences) {
  const auto& t = T();
  RngStream rng(7, "fd");
  const auto anchor_seq = t.tokenizer.tokenize(pseudo_caption("disc"));
  const auto pos_seq = t.tokenizer.tokenize("disc ni hte ytsle fo *");
  const Tensor negs = t.encode_texts({"ring in the style of chalk", "a disc", "cross in the style of mosaic"});
  const Tensor mask(numerics::Shape{1, 3}, 1.0);
  for (int point = 0; point < 10; ++point) {
    const Tensor v = numerics::sample_gaussian(rng, {1, t.dims.token_dim});
    pftest::ScalarFn f = [&](Tape& tape, const std::vector<Var>& in) {
      const auto vars = teacher::bind(tape, t, false);
      const Var a[] = {teacher::token_embed(tape, vars, anchor_seq, in[0])};
      const Var p[] = {teacher::token_embed(tape, vars, pos_seq, in[0])};
      return contrastive_prompt_loss(tape, teacher::sentence_embed(tape, t, vars, a),
                                     teacher::sentence_embed(tape, t, vars, p), tape.constant(negs), mask, 0.1);
    };
    const auto r = pftest::check_gradients(f, {v});
    EXPECT_TRUE(r.ok) << r.detail;
  }
}

TEST(MemoryBank, FifoArithmeticAndEviction) {
  RngStream rng(8, "bank");
  MemoryBank bank(4096, 2);
  Tensor rows = Tensor::matrix(64, 2);
  for (std::size_t i = 0; i < 64; ++i) rows.at(i, 0) = 1.0;
  for (int b = 0; b < 10; ++b) bank.push(rows, std::vector<std::size_t>(64, 0));
  EXPECT_EQ(bank.size(), 640u);

  MemoryBank small(100, 2);
  for (int b = 0; b < 10; ++b) {
    std::vector<std::size_t> tags(64, static_cast<std::size_t>(b));
    small.push(rows, tags);
  }
  EXPECT_EQ(small.size(), 100u);
  EXPECT_EQ(small.pushed(), 640u);
  // Oldest surviving entry is push 540, from batch 8.
  EXPECT_EQ(small.category(0), 8u);
  EXPECT_EQ(small.category(99), 9u);
  EXPECT_THROW(small.push(Tensor({1, 2}, {1.0, 1.0}), {0}), ContractViolation);

  const auto pick = small.sample(30, rng);
  EXPECT_EQ(std::set<std::size_t>(pick.begin(), pick.end()).size(), 30u);
  EXPECT_TRUE(std::is_sorted(pick.begin(), pick.end()));
  EXPECT_EQ(small.sample(500, rng).size(), 100u);
}

TEST(Pools, VanillaReplicatesAndCountsBalance) {
  const auto v = build_pool("vanilla", cats(), 3, PoolConfig{}, T(), RngStream(1, "pool"));
  for (const auto& cls : v.entries) {
    ASSERT_EQ(cls.size(), 3u);
    EXPECT_TRUE(cls[0].embedding == cls[1].embedding);
    EXPECT_TRUE(cls[1].embedding == cls[2].embedding);
  }
  EXPECT_DOUBLE_EQ(pool_diversity(v), 0.0);
  EXPECT_THROW(build_pool("bogus", cats(), 3, PoolConfig{}, T(), RngStream(1, "pool")), ValidationError);
}

TEST(Pools, MixWithTwoWordsDrawsBothOrderings) {
  PoolConfig cfg;
  cfg.dictionary = {"chalk", "velvet"};
  const auto m = build_pool("mix", {"disc"}, 40, cfg, T(), RngStream(2, "pool"));
  std::set<std::string> orders;
  for (const auto& e : m.entries[0]) orders.insert(e.provenance.substr(0, e.provenance.rfind(':')));
  EXPECT_TRUE(orders.count("mix:chalk|velvet"));
  EXPECT_TRUE(orders.count("mix:velvet|chalk"));
}

TEST(Pools, DictionaryRejectsHeldOutStyles) {
  const auto held = world::default_world().style_names(world::DomainRole::HeldOutEval);
  ASSERT_FALSE(held.empty());
  EXPECT_NO_THROW(validate_dictionary(default_style_dictionary(), T().tokenizer, held));
  EXPECT_THROW(validate_dictionary({"chalk", held[0]}, T().tokenizer, held), ValidationError);
  EXPECT_THROW(validate_dictionary({"chalk", "chalk"}, T().tokenizer, {}), ValidationError);
}

TEST(Pools, ContrastiveSpreadsTheRandomPool) {
  PoolConfig cfg;
  cfg.contrastive.epochs = 20;
  const auto r = build_pool("random", cats(), 200, cfg, T(), RngStream(3, "pool"));
  const auto c = build_pool("contrastive", cats(), 200, cfg, T(), RngStream(3, "pool"));
  ASSERT_TRUE(c.trace.has_value());
  EXPECT_LT(c.trace->epoch_loss.back(), c.trace->epoch_loss.front());
  EXPECT_FALSE(c.trace->flagged);
  EXPECT_GT(pool_diversity(c), pool_diversity(r));
  for (const auto& cls : c.entries) {
    ASSERT_EQ(cls.size(), 200u);
    for (const auto& e : cls) {
      double n = 0;
      for (double x : e.embedding.values()) n += x * x;
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
    }
  }
}

TEST(Pools, IntraClassMasksOtherCategories) {
  PoolConfig cfg;
  cfg.contrastive.epochs = 2;
  cfg.contrastive.intra_class = true;
  const auto c = build_pool("contrastive", cats(), 8, cfg, T(), RngStream(3, "pool"));
  ASSERT_TRUE(c.trace.has_value());
  EXPECT_EQ(c.trace->bank_size, 3u * 56u);  // seed pass plus two epochs
}

TEST(Pools, SaveLoadRoundTrip) {
  PoolConfig cfg;
  cfg.contrastive.epochs = 2;
  const auto p = build_pool("contrastive", cats(), 4, cfg, T(), RngStream(4, "pool"));
  const auto path = std::filesystem::temp_directory_path() / "pf_pool_rt.json";
  save_pool(path, p, cfg);
  const auto back = load_pool(path);
  EXPECT_EQ(back.method, "contrastive");
  ASSERT_EQ(back.entries.size(), p.entries.size());
  for (std::size_t c = 0; c < p.entries.size(); ++c)
    for (std::size_t j = 0; j < p.entries[c].size(); ++j) {
      EXPECT_TRUE(back.entries[c][j].embedding == p.entries[c][j].embedding);
      EXPECT_EQ(back.entries[c][j].provenance, p.entries[c][j].provenance);
    }
  std::filesystem::remove(path);
}

}  // namespace
