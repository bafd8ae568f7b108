// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "imagine/app/cli.hpp"
#include "imagine/numerics/grad_check.hpp"
#include "test_util.hpp"

using namespace imagine;
using imagine::testing::kDataDir;
using imagine::testing::kFixtureDir;
using imagine::testing::random_tensor;
using imagine::testing::TempDir;
using TD = num::Tensor<double>;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are reported.
struct Checker {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures.empty()) return {true, summary};
    std::string d = summary + "; failed: ";
    for (std::size_t i = 0; i < failures.size() && i < 3; ++i) d += (i ? " | " : "") + failures[i];
    if (failures.size() > 3) d += " (+" + std::to_string(failures.size() - 3) + " more)";
    return {false, d};
  }
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TD probe(const TD& y, std::uint64_t seed = 99) { return num::sum(num::mul(y, random_tensor(y.shape(), seed))); }

num::AttentionParams<double> random_attention(std::size_t d, std::size_t dk, std::uint64_t seed) {
  return {random_tensor({d, d}, seed, -0.5, 0.5, true),      random_tensor({d}, seed + 1, -0.1, 0.1, true),
          random_tensor({dk, d}, seed + 2, -0.5, 0.5, true), random_tensor({d}, seed + 3, -0.1, 0.1, true),
          random_tensor({dk, d}, seed + 4, -0.5, 0.5, true), random_tensor({d}, seed + 5, -0.1, 0.1, true),
          random_tensor({d, d}, seed + 6, -0.5, 0.5, true),  random_tensor({d}, seed + 7, -0.1, 0.1, true)};
}

// ------------------------------------------------------------ criterion 1

Outcome gradient_suite() {
  using namespace num;
  constexpr double h = 1e-6, tol = 1e-4;
  Checker c;
  double worst_kernel = 0;
  auto check = [&](const std::string& name, auto f, TD x) {
    auto r = grad_check(f, x, h, tol);
    worst_kernel = std::max(worst_kernel, r.max_rel_err);
    c.expect(r.passed, name + " rel-err " + fmt(r.max_rel_err));
  };
  auto a = random_tensor({3, 4}, 1), b = random_tensor({3, 4}, 2), m = random_tensor({4, 5}, 3);
  auto bias = random_tensor({4}, 4), s = TD::scalar(0.7), sq = random_tensor({4, 4}, 5, -2, 2);
  auto kinkless = imagine::testing::kink_free_tensor({3, 4}, 6);

  check("matmul lhs", [&](const TD& x) { return probe(matmul(x, m)); }, a);
  check("matmul rhs", [&](const TD& x) { return probe(matmul(a, x)); }, m);
  check("transpose", [&](const TD& x) { return probe(transpose(x)); }, a);
  check("reshape", [&](const TD& x) { return probe(reshape(x, {2, 6})); }, a);
  check("add", [&](const TD& x) { return probe(add(x, b)); }, a);
  check("add_bias", [&](const TD& x) { return probe(add_bias(a, x)); }, bias);
  check("mul", [&](const TD& x) { return probe(mul(x, b)); }, a);
  check("scale", [&](const TD& x) { return probe(scale(x, 2.5)); }, a);
  check("scale_by tensor", [&](const TD& x) { return probe(scale_by(x, s)); }, a);
  check("scale_by scalar", [&](const TD& x) { return probe(scale_by(a, x)); }, s);
  check("sum", [&](const TD& x) { return sum(mul(x, x)); }, a);
  check("pick", [&](const TD& x) { return pick(x, 2); }, bias);
  check("weighted_sum", [&](const TD& x) { return weighted_sum<double>({sum(x), probe(x)}, {2.0, 3.0}); }, a);
  check("softmax_rows", [&](const TD& x) { return probe(softmax_rows(x)); }, sq);
  check("softmax_rows causal", [&](const TD& x) { return probe(softmax_rows(x, true)); }, sq);
  check("layer_norm x", [&](const TD& x) { return probe(layer_norm(x, bias, random_tensor({4}, 7), 1e-6)); }, a);
  check("layer_norm gain", [&](const TD& g) { return probe(layer_norm(a, g, random_tensor({4}, 7), 1e-6)); }, bias);
  check("layer_norm bias", [&](const TD& x) { return probe(layer_norm(a, bias, x, 1e-6)); }, random_tensor({4}, 7));
  check("relu", [&](const TD& x) { return probe(activation(Activation::relu, x)); }, kinkless);
  check("sigmoid", [&](const TD& x) { return probe(activation(Activation::sigmoid, x)); }, a);
  check("concat_last", [&](const TD& x) { return probe(concat_last(x, random_tensor({3, 2}, 8))); }, a);
  check("concat_last broadcast", [&](const TD& x) { return probe(concat_last(a, x)); }, bias);
  check("slice_cols", [&](const TD& x) { return probe(slice_cols(x, 1, 2)); }, a);
  check("slice_rows", [&](const TD& x) { return probe(slice_rows(x, 1, 2)); }, a);
  check("concat_rows", [&](const TD& x) { return probe(concat_rows(x, b)); }, a);
  check("reduce mean_rows", [&](const TD& x) { return probe(reduce(Reduce::mean_rows, x)); }, a);
  check("reduce first_row", [&](const TD& x) { return probe(reduce(Reduce::first_row, x)); }, a);
  check("embedding_lookup", [&](const TD& x) { return probe(embedding_lookup(x, std::vector<int>{2, 0, 2})); }, a);
  check("cross_entropy", [&](const TD& x) { return cross_entropy_from_logits(x, 1); }, bias);
  check("sequence_nll", [&](const TD& x) { return sequence_nll(x, std::vector<int>{3, 0, 1}); }, a);
  check("sequence_nll weighted",
        [&](const TD& x) { return sequence_nll(x, std::vector<int>{3, 0, 1}, std::vector<double>{0.5, 1, 2, 0}); }, a);
  check("linear w", [&](const TD& x) { return probe(linear(a, x, random_tensor({5}, 9))); }, m);
  check("linear b", [&](const TD& x) { return probe(linear(a, m, x)); }, random_tensor({5}, 9));
  {
    auto p = random_attention(4, 8, 20);
    auto q = random_tensor({3, 4}, 30), mem = random_tensor({5, 8}, 31);
    check("attention query", [&](const TD& x) { return probe(multi_head_attention(x, mem, mem, 2, false, p).out); }, q);
    check("attention memory", [&](const TD& x) { return probe(multi_head_attention(q, x, x, 2, false, p).out); }, mem);
    auto ps = random_attention(4, 4, 40);
    check("attention causal self", [&](const TD& x) { return probe(multi_head_attention(x, x, x, 2, true, ps).out); },
          random_tensor({4, 4}, 32));
    check("attention wk", [&](const TD& w) {
      auto pp = p;
      pp.wk = w;
      return probe(multi_head_attention(q, mem, mem, 2, false, pp).out);
    }, p.wk.detach());
  }

  // End to end: total loss against 20 sampled scalar parameters.
  auto fx = imagine::testing::load_fixture(64);
  model::ImagineModel<double> net(imagine::testing::small_config(fx.vocab.size(), fx.labels.size(), 8));
  std::vector<double> face = training::face_weights([&] {
    std::vector<double> f(fx.vocab.size(), 0.0);
    for (const auto& ex : fx.train_ex) training::count_targets(ex, f);
    return f;
  }());
  const auto& ex = fx.train_ex[2];
  auto loss = [&] { return training::example_loss(net, ex, face, training::Lambdas{}).loss.total; };
  net.registry().zero_grad();
  num::backward(loss());
  const auto& params = net.registry().params();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  double worst_e2e = 0;
  for (int k = 0; k < 20; ++k) {
    const auto& p = params[pick_param(rng)];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.tensor.size() - 1)(rng);
    auto vals = TD(p.tensor).values();
    const double saved = vals[i];
    vals[i] = saved + h;
    const double up = loss().item();
    vals[i] = saved - h;
    const double down = loss().item();
    vals[i] = saved;
    const double err = relative_error(p.tensor.grad()[i], (up - down) / (2 * h));
    worst_e2e = std::max(worst_e2e, err);
    c.expect(err <= 1e-3, "end-to-end " + p.name + "[" + std::to_string(i) + "] rel-err " + fmt(err));
  }
  return c.outcome("kernel max rel-err " + fmt(worst_kernel, 3) + ", end-to-end max rel-err " + fmt(worst_e2e, 3));
}

// ------------------------------------------------------------ criterion 2

Outcome shape_suite() {
  Checker c;
  model::ModelConfig cfg;  // d = 300, 1024 positions
  cfg.vocab_size = 60;
  cfg.num_emotions = 32;
  model::ImagineModel<double> m(cfg);
  const std::size_t d = cfg.d;
  num::NoGradGuard guard;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> tok(5, 59);
  auto pooled = random_tensor({d}, 6);
  for (std::size_t L : {1u, 7u, 64u, 1024u}) {
    corpus::CauseInput in;
    for (std::size_t i = 0; i < L; ++i) {
      in.word_ids.push_back(i == 0 ? corpus::kCls : tok(rng));
      in.position_ids.push_back(static_cast<int>(i));
      in.state_ids.push_back(static_cast<int>(i % 2));
    }
    const std::string tag = "L=" + std::to_string(L) + " ";
    auto hc = m.encode_cause(in).states;
    c.expect(hc.shape() == num::Shape{L, d}, tag + "H_C " + num::shape_str(hc.shape()));
    auto u = num::concat_last(hc, pooled);
    c.expect(u.shape() == num::Shape{L, 2 * d}, tag + "U_K " + num::shape_str(u.shape()));
    std::array<TD, knowledge::kNumRelationTypes> refined;
    for (std::size_t t = 0; t < refined.size(); ++t) {
      refined[t] = m.refine_with_knowledge(hc, random_tensor({d}, 10 + t));
      c.expect(refined[t].shape() == num::Shape{L, d}, tag + "H_ref " + num::shape_str(refined[t].shape()));
    }
    auto tilde = num::concat_last(refined[1], refined[0]);
    c.expect(tilde.shape() == num::Shape{L, 2 * d}, tag + "H_tilde " + num::shape_str(tilde.shape()));
    auto hat = m.gate(tilde);
    c.expect(hat.shape() == num::Shape{L, d}, tag + "H_hat " + num::shape_str(hat.shape()));
    auto fused = m.gate_and_fuse(refined, random_tensor({d}, 20));
    c.expect(fused.shape() == num::Shape{L, 4 * d}, tag + "H_C fused " + num::shape_str(fused.shape()));
  }
  return c.outcome("d=300, L in {1, 7, 64, 1024}: L×300 → L×600 → L×300 → L×600 → L×300 → L×1200");
}

// ------------------------------------------------------------ criterion 3

Outcome face_oracle() {
  Checker c;
  c.expect(training::face_weights({2, 1, 1}) == std::vector<double>{0.0, 1.5, 1.5}, "[2,1,1] is not [0,1.5,1.5]");
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> len(2, 50), cnt(0, 100);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(static_cast<std::size_t>(len(rng)));
    for (auto& x : f) x = cnt(rng);
    f[0] += 1;
    auto raw = training::face_raw_weights(f);
    auto w = training::face_weights(f);
    const auto top = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
    const std::string tag = "trial " + std::to_string(trial) + " ";
    c.expect(raw[top] == 0.0, tag + "max-frequency raw weight " + fmt(raw[top], 17));
    for (double r : raw) c.expect(r >= 0.0 && r <= 1.0, tag + "raw weight " + fmt(r) + " outside [0,1]");
    const bool degenerate = std::all_of(raw.begin(), raw.end(), [](double r) { return r == 0.0; });
    if (!degenerate) {
      const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
      c.expect(std::abs(mean - 1.0) <= 1e-12, tag + "mean " + fmt(mean, 17));
      ++checked;
    }
  }
  return c.outcome("[2,1,1] → [0,1.5,1.5] exact; 100 random vectors (" + std::to_string(checked) +
                   " non-degenerate) satisfy range, zero-at-max and mean-1");
}

// ------------------------------------------------------------ criterion 4

Outcome loss_identities() {
  Checker c;
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto logits = random_tensor({7, 11}, 400 + s, -3, 3);
    std::vector<int> y;
    std::mt19937_64 rng(s);
    for (int i = 0; i < 7; ++i) y.push_back(std::uniform_int_distribution<int>(0, 10)(rng));
    const double gen = training::generation_loss(logits, y).item();
    const double div = training::diversity_loss(logits, y, std::vector<double>(11, 1.0)).item();
    worst = std::max(worst, std::abs(gen - div));
    c.expect(std::abs(gen - div) <= 1e-12, "unit-weight diversity differs by " + fmt(std::abs(gen - div)));
    std::uniform_real_distribution<double> u(0, 5);
    const double g = u(rng), e = u(rng), cm = u(rng), d = u(rng);
    auto t = training::total_loss(TD::scalar(g), TD::scalar(e), TD::scalar(cm), TD::scalar(d));
    const double want = g + e + cm + 1.5 * d;
    worst = std::max(worst, std::abs(t.total.item() - want));
    c.expect(std::abs(t.total.item() - want) <= 1e-12, "total differs by " + fmt(std::abs(t.total.item() - want)));
  }
  auto one = TD::scalar(1);
  c.expect(training::total_loss(one, one, one, one).total.item() == 4.5, "(1,1,1,1) total is not 4.5");
  return c.outcome("20 cases, max deviation " + fmt(worst, 3));
}

// ------------------------------------------------------------ criterion 5

Outcome overfit_oracle() {
  Checker c;
  auto rc = app::load_run_config(kFixtureDir / "config.json");
  auto labels = corpus::load_labels(rc.labels.string());
  auto train_ds = corpus::load_dialogues(rc.train.string(), labels);
  auto vocab = corpus::build_vocab(train_ds, rc.min_freq);
  auto providers = app::make_providers(rc.cause_mode, rc.lexicon, rc.knowledge);
  c.expect(train_ds.size() == 8, "fixture has " + std::to_string(train_ds.size()) + " dialogues");
  c.expect(vocab.size() < 200, "vocab size " + std::to_string(vocab.size()));
  c.expect(labels.size() == 4, std::to_string(labels.size()) + " emotions");

  auto mcfg = rc.model;
  mcfg.vocab_size = vocab.size();
  mcfg.num_emotions = labels.size();
  model::ImagineModel<double> m(mcfg);
  auto train_ex = prepare_all(train_ds, vocab, labels, providers, mcfg.max_positions);
  auto tc = rc.train_cfg;
  tc.max_steps = 500;
  tc.max_epochs = 1000;
  tc.patience = 1000;
  // Validation on the training split itself: the best restored weights are
  // the ones with the lowest train perplexity.
  auto res = training::train(m, train_ex, train_ex, corpus::token_frequencies(train_ds, vocab), tc);
  auto ev = eval::evaluate(m, train_ex, vocab);
  c.expect(res.steps <= 500, std::to_string(res.steps) + " steps");
  c.expect(ev.report.ppl <= 1.5, "train PPL " + fmt(ev.report.ppl));
  c.expect(ev.report.emotion_acc == 1.0, "train emotion accuracy " + fmt(ev.report.emotion_acc));
  return c.outcome(std::to_string(res.steps) + " steps, train PPL " + fmt(ev.report.ppl, 4) + ", emotion accuracy " +
                   fmt(ev.report.emotion_acc) + ", vocab " + std::to_string(vocab.size()));
}

// ------------------------------------------------------------ criterion 6

using Sentence = eval::Sentence;

bool same_gram(const Sentence& a, std::size_t i, const Sentence& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

std::size_t occurrences(const Sentence& src, std::size_t at, const Sentence& s, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= s.size(); ++j) c += same_gram(src, at, s, j, n);
  return c;
}

Outcome metric_oracles() {
  Checker c;
  static const char* kWords[] = {"a", "b", "c", "the", "cat"};
  std::mt19937_64 rng(606);
  auto sentence = [&](std::size_t max_len) {
    Sentence s(std::uniform_int_distribution<std::size_t>(0, max_len)(rng));
    for (auto& t : s) t = kWords[std::uniform_int_distribution<int>(0, 4)(rng)];
    return s;
  };
  double worst_bleu = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> cands, refs;
    for (std::size_t k = std::uniform_int_distribution<std::size_t>(1, 4)(rng); k > 0; --k) {
      cands.push_back(sentence(7));
      refs.push_back(sentence(7));
    }
    std::size_t match[2] = {0, 0}, total[2] = {0, 0}, clen = 0, rlen = 0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      clen += cands[k].size();
      rlen += refs[k].size();
      for (std::size_t n = 1; n <= 2; ++n)
        for (std::size_t i = 0; i + n <= cands[k].size(); ++i) {
          ++total[n - 1];
          bool first = true;
          for (std::size_t p = 0; p < i; ++p) first &= !same_gram(cands[k], p, cands[k], i, n);
          if (first)
            match[n - 1] += std::min(occurrences(cands[k], i, cands[k], n), occurrences(cands[k], i, refs[k], n));
        }
    }
    const auto st = eval::bleu2_stats(cands, refs);
    const std::string tag = "trial " + std::to_string(trial) + " ";
    for (int n = 0; n < 2; ++n) {
      c.expect(st.matches[n] == match[n], tag + "clipped " + std::to_string(n + 1) + "-gram matches");
      c.expect(st.totals[n] == total[n], tag + std::to_string(n + 1) + "-gram totals");
    }
    c.expect(st.candidate_length == clen && st.reference_length == rlen, tag + "lengths");
    double want = 0;
    if (match[0] && match[1]) {
      const double bp = clen < rlen ? std::exp(1 - static_cast<double>(rlen) / static_cast<double>(clen)) : 1.0;
      want = bp * std::sqrt(static_cast<double>(match[0]) / static_cast<double>(total[0]) *
                            static_cast<double>(match[1]) / static_cast<double>(total[1]));
    }
    const double got = eval::bleu2(cands, refs);
    worst_bleu = std::max(worst_bleu, std::abs(got - want));
    c.expect(std::abs(got - want) <= 1e-14 && (got == 0) == (want == 0), tag + "bleu2 " + fmt(got) + " vs " + fmt(want));

    std::vector<Sentence> pool;
    for (std::size_t k = std::uniform_int_distribution<std::size_t>(0, 5)(rng); k > 0; --k) pool.push_back(sentence(6));
    for (std::size_t n = 1; n <= 2; ++n) {
      std::vector<std::pair<std::size_t, std::size_t>> seen;
      double tot = 0, uniq = 0;
      for (std::size_t k = 0; k < pool.size(); ++k)
        for (std::size_t i = 0; i + n <= pool[k].size(); ++i) {
          ++tot;
          bool fresh = true;
          for (auto [rk, ri] : seen) fresh &= !same_gram(pool[rk], ri, pool[k], i, n);
          uniq += fresh;
          seen.emplace_back(k, i);
        }
      const double want_d = tot == 0 ? 0.0 : uniq / tot;
      c.expect(eval::distinct_n(pool, n) == want_d, tag + "distinct-" + std::to_string(n));
    }
  }

  // Uniform logits: zero output projection.
  const std::size_t V = 100;
  model::ImagineModel<double> m(imagine::testing::small_config(V, 3));
  for (const char* name : {"output.w", "output.b"})
    for (auto& x : m.param(name).values()) x = 0.0;
  auto fx = imagine::testing::load_fixture(64);
  std::vector<PreparedExample> split;
  std::mt19937_64 trng(7);
  for (const auto& ex : fx.train_ex) {
    PreparedExample e;
    e.id = ex.id;
    e.input = ex.input;
    auto clamp = [&](corpus::TokenSequence& s) {
      for (auto& id : s.word_ids) id = id % static_cast<int>(V);
    };
    clamp(e.input.context);
    clamp(e.input.cause);
    for (auto& k : e.input.knowledge) clamp(k);
    for (int id : ex.target) e.target.push_back(id % static_cast<int>(V));
    split.push_back(std::move(e));
  }
  const double ppl = eval::perplexity(m, split);
  c.expect(std::abs(ppl - static_cast<double>(V)) <= 1e-6 * static_cast<double>(V), "uniform PPL " + fmt(ppl, 17));
  return c.outcome("200 randomized cases match brute-force counters (max BLEU deviation " + fmt(worst_bleu, 3) +
                   "); uniform PPL " + fmt(ppl, 12) + " for V=100");
}

// ------------------------------------------------------------ criterion 7

Outcome cm_properties() {
  Checker c;
  const std::size_t d = 16;
  model::ImagineModel<double> m(imagine::testing::small_config(30, 3, d));
  auto h = random_tensor({d}, 70);
  auto force = [&](std::array<double, 3> yes_sign) {
    for (std::size_t i = 0; i < model::kNumCm; ++i) {
      const std::string base = std::string("cm.") + model::kCmNames[i] + ".cls.";
      for (auto& x : m.param(base + "w").values()) x = 0.0;
      auto b = m.param(base + "b").values();
      b[0] = -800.0 * yes_sign[i];
      b[1] = 800.0 * yes_sign[i];
    }
    return m.cm_signal(h);
  };
  auto zero = force({-1, -1, -1});
  for (double v : zero.signal.values()) c.expect(v == 0.0, "zero yes-probabilities give " + fmt(v));
  for (std::size_t i = 0; i < model::kNumCm; ++i) {
    std::array<double, 3> s{-1, -1, -1};
    s[i] = 1;
    auto one = force(s);
    c.expect(one.yes_prob[i].item() == 1.0, std::string(model::kCmNames[i]) + " yes-probability not 1");
    auto sig = one.signal.values(), rep = one.representations[i].values();
    c.expect(std::equal(sig.begin(), sig.end(), rep.begin()),
             std::string("signal differs from e_") + model::kCmNames[i]);
  }
  // Direct construction without the classifiers.
  std::array<TD, 3> reps{random_tensor({d}, 71), random_tensor({d}, 72), random_tensor({d}, 73)};
  auto z = model::ImagineModel<double>::combine_cm(reps, {TD::scalar(0), TD::scalar(0), TD::scalar(0)});
  for (double v : z.values()) c.expect(v == 0.0, "combine_cm zero case");
  auto e = model::ImagineModel<double>::combine_cm(reps, {TD::scalar(0), TD::scalar(1), TD::scalar(0)});
  c.expect(std::equal(e.values().begin(), e.values().end(), reps[1].values().begin()), "combine_cm single-head case");
  return c.outcome("zero case and each single-head case, through the heads and by direct construction");
}

// ------------------------------------------------------- CLI helpers

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun in_process(std::vector<std::string> args) {
  args.insert(args.begin(), "imagine");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in;
  std::ostringstream out, err;
  CliRun r;
  r.code = app::run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fixture_config(const fs::path& dir, const std::string& name, const json& train_overrides) {
  auto cfg = json::parse(slurp(kFixtureDir / "config.json"));
  for (auto& [k, v] : cfg["corpus"].items()) v = (kFixtureDir / v.get<std::string>()).string();
  for (const char* k : {"labels", "knowledge"}) cfg[k] = (kFixtureDir / cfg[k].get<std::string>()).string();
  cfg["lexicon"] = (kDataDir / "lexicon.txt").string();
  cfg["output_dir"] = (dir / (name + "_run")).string();
  for (auto& [k, v] : train_overrides.items()) cfg["train"][k] = v;
  const auto path = dir / (name + ".json");
  std::ofstream(path) << cfg.dump(2);
  return path;
}

// ------------------------------------------------------------ criterion 8

Outcome determinism() {
  Checker c;
  TempDir dir("accept_det");
  std::vector<std::string> csvs, gens;
  const auto input = dir / "contexts.jsonl";
  std::ofstream(input) << slurp(kFixtureDir / "test.jsonl");
  std::size_t rows = 0;
  for (const char* name : {"a", "b"}) {
    auto cfg = fixture_config(dir.path(), name, json::object());
    auto r = in_process({"train", "--config", cfg.string()});
    c.expect(r.code == 0, std::string("train ") + name + " exit " + std::to_string(r.code) + " " + r.err);
    csvs.push_back(slurp(dir / (std::string(name) + "_run") / "loss.csv"));
    const auto out = dir / (std::string(name) + "_gen.jsonl");
    auto g = in_process({"generate", "--ckpt", (dir / (std::string(name) + "_run") / "checkpoint").string(), "--input",
                         input.string(), "--out", out.string()});
    c.expect(g.code == 0, std::string("generate ") + name + " exit " + std::to_string(g.code) + " " + g.err);
    gens.push_back(slurp(out));
    rows = static_cast<std::size_t>(std::count(csvs.back().begin(), csvs.back().end(), '\n'));
  }
  c.expect(!csvs[0].empty() && csvs[0] == csvs[1], "loss CSVs differ");
  c.expect(!gens[0].empty() && gens[0] == gens[1], "generations differ across runs");
  // Greedy generation from one checkpoint is also repeatable in-process.
  const auto again = dir / "a_gen_again.jsonl";
  in_process({"generate", "--ckpt", (dir / "a_run" / "checkpoint").string(), "--input", input.string(), "--out",
              again.string()});
  c.expect(slurp(again) == gens[0], "regeneration from one checkpoint differs");
  return c.outcome("two full float64 runs: identical " + std::to_string(rows - 1) +
                   "-step loss CSVs and identical greedy outputs");
}

// ------------------------------------------------------------ criterion 9

int run_binary(const std::string& args) {
  const std::string cmd = std::string(IMAGINE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome smoke() {
  Checker c;
  TempDir dir("accept_smoke");
  const std::string d = dir.path().string();
  c.expect(run_binary("preprocess --corpus " + kFixtureDir.string() + " --out " + d + "/pre --labels " +
                      (kFixtureDir / "labels.txt").string()) == 0,
           "preprocess failed");
  auto cfg = fixture_config(dir.path(), "smoke", {{"max_steps", 50}, {"max_epochs", 100}, {"patience", 100}});
  c.expect(run_binary("train --config " + cfg.string()) == 0, "train failed");
  const auto ckpt = dir / "smoke_run" / "checkpoint";
  const auto csv = slurp(dir / "smoke_run" / "loss.csv");
  const auto steps = std::count(csv.begin(), csv.end(), '\n') - 1;
  c.expect(steps == 50, std::to_string(steps) + " training steps logged");
  c.expect(run_binary("eval --ckpt " + ckpt.string() + " --split test --report " + d + "/report.json") == 0,
           "eval failed");
  c.expect(run_binary("generate --ckpt " + ckpt.string() + " --input " + (kFixtureDir / "test.jsonl").string() +
                      " --out " + d + "/gen.jsonl") == 0,
           "generate failed");
  std::size_t responses = 0, longest = 0;
  {
    std::ifstream in(dir / "gen.jsonl");
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      ++responses;
      const auto n = corpus::tokenize(json::parse(line)["generated"].get<std::string>()).size();
      longest = std::max(longest, n);
      c.expect(n <= 30, "response of " + std::to_string(n) + " tokens");
    }
  }
  c.expect(responses == 3, std::to_string(responses) + " responses");
  double ppl = 0;
  try {
    auto r = json::parse(slurp(dir / "report.json"));
    ppl = r["ppl"].get<double>();
    c.expect(std::isfinite(ppl) && ppl >= 1.0, "ppl " + fmt(ppl));
    for (const char* k : {"bleu2", "distinct1", "distinct2", "emotion_acc"}) {
      const double v = r[k].get<double>();
      c.expect(v >= 0.0 && v <= 1.0, std::string(k) + " " + fmt(v));
    }
    c.expect(r["n_examples"] == 3, "n_examples");
  } catch (const std::exception& e) {
    c.expect(false, std::string("report unreadable: ") + e.what());
  }
  return c.outcome("preprocess → train 50 steps → eval → generate via " + fs::path(IMAGINE_CLI_PATH).filename().string() +
                   "; 3 responses, longest " + std::to_string(longest) + " tokens, ppl " + fmt(ppl, 4));
}

// ----------------------------------------------------------- criterion 10

template <typename T>
bool same_bits(const model::ImagineModel<T>& a, const model::ImagineModel<T>& b, std::string& which) {
  const auto& pa = a.registry().params();
  const auto& pb = b.registry().params();
  if (pa.size() != pb.size()) return which = "tensor count", false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].name != pb[i].name || pa[i].tensor.shape() != pb[i].tensor.shape() ||
        std::memcmp(pa[i].tensor.values().data(), pb[i].tensor.values().data(), pa[i].tensor.size() * sizeof(T)))
      return which = pa[i].name, false;
  return true;
}

Outcome checkpoint_round_trip() {
  Checker c;
  TempDir dir("accept_ckpt");
  auto fx = imagine::testing::load_fixture(128);
  auto cfg = imagine::testing::small_config(fx.vocab.size(), fx.labels.size(), 32);
  cfg.max_positions = 128;

  // float32 weights: the blob holds them exactly.
  model::ImagineModel<float> m(cfg);
  {
    std::vector<num::Tensor<float>> params;
    for (const auto& p : m.registry().params()) params.push_back(p.tensor);
    training::AdamMoments<float> mom;
    std::vector<float> face(fx.vocab.size(), 1.0f);
    for (std::size_t t = 1; t <= 5; ++t) {
      m.registry().zero_grad();
      num::backward(training::example_loss(m, fx.train_ex[t], face, training::Lambdas{}).loss.total);
      training::adam_step(params, mom, training::AdamConfig{1e-2}, t);
    }
  }
  model::save_checkpoint(dir / "f32", m, fx.vocab.hash(), fx.labels.names());
  auto back = model::load_checkpoint<float>(dir / "f32", fx.vocab.hash());
  std::string which;
  c.expect(same_bits(m, back, which), "float32 tensor " + which + " differs");
  auto ea = eval::evaluate(m, fx.test_ex, fx.vocab), eb = eval::evaluate(back, fx.test_ex, fx.vocab);
  c.expect(eval::report_json(ea.report).dump() == eval::report_json(eb.report).dump(), "float32 eval reports differ");
  for (std::size_t i = 0; i < ea.outputs.size(); ++i)
    c.expect(ea.outputs[i].generated == eb.outputs[i].generated, "float32 outputs differ for " + ea.outputs[i].id);

  // float64 weights are stored as float32; after one save they are fixed points.
  model::ImagineModel<double> md(cfg);
  model::save_checkpoint(dir / "f64a", md, fx.vocab.hash(), fx.labels.names());
  auto once = model::load_checkpoint<double>(dir / "f64a", fx.vocab.hash());
  model::save_checkpoint(dir / "f64b", once, fx.vocab.hash(), fx.labels.names());
  auto twice = model::load_checkpoint<double>(dir / "f64b", fx.vocab.hash());
  c.expect(same_bits(once, twice, which), "float64 reload tensor " + which + " differs");
  c.expect(slurp(dir / "f64a" / "weights.bin") == slurp(dir / "f64b" / "weights.bin"), "float64 blobs differ");
  auto e1 = eval::evaluate(once, fx.test_ex, fx.vocab), e2 = eval::evaluate(twice, fx.test_ex, fx.vocab);
  c.expect(eval::report_json(e1.report).dump() == eval::report_json(e2.report).dump(), "float64 eval reports differ");
  return c.outcome("float32: " + std::to_string(m.registry().params().size()) +
                   " tensors bit-exact, eval identical; float64: reloads bit-exact after float32 storage");
}

} // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "shape suite", 30, shape_suite},
      {3, "FACE oracle", 0, face_oracle},
      {4, "loss identities", 0, loss_identities},
      {5, "overfit oracle", 300, overfit_oracle},
      {6, "metric oracles", 0, metric_oracles},
      {7, "CM signal properties", 0, cm_properties},
      {8, "determinism", 0, determinism},
      {9, "end-to-end smoke", 180, smoke},
      {10, "checkpoint round-trip", 0, checkpoint_round_trip},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.limit_s > 0 && secs >= cr.limit_s) {
      o.pass = false;
      o.detail += "; runtime " + fmt(secs, 3) + " s exceeds " + fmt(cr.limit_s) + " s";
    }
    failed += !o.pass;
    std::printf("%s %2d %-22s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", cr.id, cr.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
