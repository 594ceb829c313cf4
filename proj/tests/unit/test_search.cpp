#include "embinv/search.hpp"

#include "embinv/metrics.hpp"

#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

using namespace embinv;

namespace {

Eigen::VectorXd make_vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

std::vector<int> ranking(const Eigen::VectorXd& values) {
  std::vector<int> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  return order;
}

// Deterministic pool of distinct lowercase words, all at least 4 characters.
std::vector<std::string> word_pool(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::set<std::string> words;
  while (static_cast<int>(words.size()) < count) {
    int len = 4 + static_cast<int>(rng() % 4);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng() % 26));
    words.insert(w);
  }
  return {words.begin(), words.end()};
}

std::vector<std::string> random_sentences(const std::vector<std::string>& pool, int n_lines,
                                          int words_per_line, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> lines;
  for (int i = 0; i < n_lines; ++i) {
    std::string line;
    for (int w = 0; w < words_per_line; ++w) {
      if (!line.empty()) line.push_back(' ');
      line += pool[rng() % pool.size()];
    }
    lines.push_back(line);
  }
  return lines;
}

struct ExactToy {
  // Victim is an exact linear image of the local space, so alignment can
  // recover the map perfectly.
  std::shared_ptr<HashEmbedder> local;
  std::shared_ptr<LinearVictim> victim_port;
  NGramLM lm;

  ExactToy(int d_local, int d_victim, const std::vector<std::string>& corpus)
      : local(std::make_shared<HashEmbedder>(d_local, 3, 101)),
        victim_port(std::make_shared<LinearVictim>(local, d_victim, 707)),
        lm(train_ngram(corpus, 2, 0.1)) {}
};

}  // namespace

TEST_CASE("z_score fixtures") {
  Eigen::VectorXd constant = z_score(make_vec({1.0, 1.0, 1.0}));
  CHECK(constant.cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd simple = z_score(make_vec({1.0, 2.0, 3.0}));
  CHECK(simple[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(simple[1] == doctest::Approx(0.0));
  CHECK(simple[2] == doctest::Approx(1.2247).epsilon(1e-4));

  CHECK(z_score(make_vec({42.0}))[0] == 0.0);
  CHECK_THROWS_AS(z_score(Eigen::VectorXd()), std::invalid_argument);
}

TEST_CASE("z_score is invariant under positive affine maps") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_real_distribution<double> pos(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng() % 10);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = gauss(rng);
    double a = pos(rng);
    double b = gauss(rng);
    Eigen::VectorXd shifted = (a * x.array() + b).matrix();
    CHECK((z_score(shifted) - z_score(x)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("score_candidates fixtures") {
  // conf = 0 orders purely by logits.
  Eigen::VectorXd logits = make_vec({0.4, -1.0, 2.0, 0.8});
  Eigen::VectorXd cosines = make_vec({0.9, 0.8, -0.5, 0.1});
  CHECK(ranking(score_candidates(logits, cosines, 0.0)) == ranking(logits));

  // Equal logits and conf = 1 orders purely by cosines.
  Eigen::VectorXd flat = make_vec({1.0, 1.0, 1.0, 1.0});
  CHECK(ranking(score_candidates(flat, cosines, 1.0)) == ranking(cosines));

  // Worked two-candidate case: z-scores are +-1 each.
  Eigen::VectorXd s = score_candidates(make_vec({0.0, 1.0}), make_vec({0.9, 0.1}), 0.5);
  CHECK(s[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(score_candidates(flat, make_vec({1.0}), 0.5), std::invalid_argument);
}

TEST_CASE("hybrid ranking is invariant to independent positive affine transforms") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.05, 4.0);
  std::uniform_real_distribution<double> confs(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng() % 30);
    Eigen::VectorXd logits(n), cosines(n);
    for (int i = 0; i < n; ++i) {
      logits[i] = gauss(rng);
      cosines[i] = gauss(rng);
    }
    double conf = confs(rng);
    auto base = ranking(score_candidates(logits, cosines, conf));
    Eigen::VectorXd logits2 = (pos(rng) * logits.array() + gauss(rng)).matrix();
    Eigen::VectorXd cosines2 = (pos(rng) * cosines.array() + gauss(rng)).matrix();
    auto transformed = ranking(score_candidates(logits2, cosines2, conf));
    CHECK(base == transformed);
  }
}

TEST_CASE("query schedule: bootstrap burst then exponential decay") {
  AttackConfig cfg;
  cfg.k_a = 50;
  cfg.gamma = 0.8;
  CHECK(query_count(1, cfg) == 150);
  CHECK(query_count(2, cfg) == 40);
  CHECK(query_count(3, cfg) == 32);
  CHECK(query_count(5, cfg) == 20);  // round(20.48)

  cfg.rounding = Rounding::Floor;
  CHECK(query_count(4, cfg) == 25);  // floor(25.6)
  cfg.rounding = Rounding::Ceil;
  CHECK(query_count(4, cfg) == 26);
  cfg.rounding = Rounding::Nearest;
  CHECK(query_count(4, cfg) == 26);

  CHECK(query_count(60, cfg) == 1);  // floored at one query
  CHECK_THROWS_AS(query_count(0, cfg), std::invalid_argument);
}

TEST_CASE("single beam step picks the true single-token text") {
  ExactToy toy(32, 16, {"a b", "b a"});
  // Orthogonal token embeddings so the diversity filter keeps both words.
  Vocabulary& v = toy.lm.vocab();
  v.token_emb.setZero();
  for (int i = 0; i < v.size(); ++i) v.token_emb(i, i) = 1.0;

  QueryLedger ledger;
  VictimHandle victim(toy.victim_port, ledger);
  Embedding target = toy.victim_port->embed("a");

  AttackConfig cfg;
  cfg.k_s = 10;
  cfg.k_a = 50;
  cfg.k_b = 1;
  cfg.t_max = 4;

  BeamState state;
  state.align = AlignState(toy.local->dim(), victim.dim(), cfg.lambda);
  Candidate root;
  root.tokens = {v.bos_id};
  state.live = {root};

  beam_step(state, target, toy.lm, *toy.local, victim, cfg);

  REQUIRE(state.live.size() == 1);
  CHECK(state.live.front().text == "a");
  CHECK(state.iteration == 1);
  // Both words plus the EOS expansion were queried (budget far above pool).
  CHECK(ledger.online_sentences == 3);
  REQUIRE(state.align.conf_history.size() == 1);
  CHECK(state.align.conf_history.front() <= 0.7 + 1e-12);
}

TEST_CASE("beam invariants hold across steps") {
  auto pool = word_pool(60, 11);
  ExactToy toy(48, 24, random_sentences(pool, 80, 4, 12));
  QueryLedger ledger;
  VictimHandle victim(toy.victim_port, ledger);
  Embedding target = toy.victim_port->embed(pool[7] + " " + pool[9]);

  AttackConfig cfg;
  cfg.k_s = 40;
  cfg.k_a = 10;
  cfg.k_b = 5;
  cfg.t_max = 4;

  BeamState state;
  state.align = AlignState(toy.local->dim(), victim.dim(), cfg.lambda);
  Candidate root;
  root.tokens = {toy.lm.vocab().bos_id};
  state.live = {root};

  std::size_t finished_before = 0;
  while (!state.live.empty() && state.iteration < cfg.t_max) {
    beam_step(state, target, toy.lm, *toy.local, victim, cfg);
    CHECK(state.live.size() <= static_cast<std::size_t>(cfg.k_b));
    for (const auto& c : state.live) {
      CHECK_FALSE(c.finished);
      CHECK(static_cast<int>(c.tokens.size()) - 1 == state.iteration);
    }
    CHECK(state.finished.size() >= finished_before);
    for (const auto& c : state.finished) CHECK(c.finished);
    finished_before = state.finished.size();
  }
  CHECK(state.iteration == cfg.t_max);
}

TEST_CASE("single-iteration attack returns one token and spends 150 plus rerank") {
  auto pool = word_pool(260, 21);
  std::vector<std::string> corpus;
  corpus.reserve(pool.size());
  for (const auto& w : pool) corpus.push_back(w);
  ExactToy toy(48, 32, corpus);

  QueryLedger ledger;
  VictimHandle victim(toy.victim_port, ledger);
  Embedding target = toy.victim_port->embed(pool[31]);

  AttackConfig cfg;
  cfg.k_s = 400;
  cfg.k_a = 50;
  cfg.k_b = 5;
  cfg.t_max = 1;
  cfg.final_rerank = 5;

  RunReport report = run_attack(target, toy.lm, *toy.local, victim, cfg);
  CHECK(report.iterations_used == 1);
  CHECK(count_ws_tokens(report.reconstruction) == 1);
  CHECK(report.ledger.online_sentences == 150 + 5);
  CHECK(report.conf_trace.size() == 1);
}

TEST_CASE("ledger matches the closed-form schedule over a full run") {
  auto pool = word_pool(240, 31);
  ExactToy toy(48, 24, random_sentences(pool, 200, 5, 32));

  QueryLedger ledger;
  VictimHandle victim(toy.victim_port, ledger);
  Embedding target = toy.victim_port->embed(random_sentences(pool, 1, 5, 33).front());

  AttackConfig cfg;
  cfg.k_s = 300;
  cfg.k_a = 50;
  cfg.k_b = 4;
  cfg.gamma = 0.8;
  cfg.t_max = 4;
  cfg.final_rerank = 3;

  RunReport report = run_attack(target, toy.lm, *toy.local, victim, cfg);
  REQUIRE(report.iterations_used == 4);
  std::uint64_t expected = 150;
  for (int t = 2; t <= 4; ++t) expected += static_cast<std::uint64_t>(query_count(t, cfg));
  expected += 3;  // final verification of the shortlist
  CHECK(report.ledger.online_sentences == expected);
  CHECK(report.conf_trace.size() == 4);
}

TEST_CASE("confidence locks in once enough pairs are ingested") {
  // Exactly alignable victim at d_local = 64: after the 150-pair bootstrap
  // (>= 2 * d_local), every later confidence reading should be near-perfect.
  auto pool = word_pool(200, 41);
  ExactToy toy(64, 48, random_sentences(pool, 150, 5, 42));

  QueryLedger ledger;
  VictimHandle victim(toy.victim_port, ledger);
  Embedding target = toy.victim_port->embed(random_sentences(pool, 1, 5, 43).front());

  AttackConfig cfg;
  cfg.k_s = 250;
  cfg.k_a = 50;
  cfg.k_b = 4;
  cfg.t_max = 5;

  RunReport report = run_attack(target, toy.lm, *toy.local, victim, cfg);
  REQUIRE(report.conf_trace.size() >= 2);
  for (std::size_t i = 1; i < report.conf_trace.size(); ++i) {
    CHECK(report.conf_trace[i] >= 0.95);
  }
}

TEST_CASE("attacks are deterministic given fixed backends") {
  auto pool = word_pool(80, 51);
  ExactToy toy(32, 16, random_sentences(pool, 60, 4, 52));
  Embedding target = toy.victim_port->embed(random_sentences(pool, 1, 4, 53).front());

  AttackConfig cfg;
  cfg.k_s = 60;
  cfg.k_a = 12;
  cfg.k_b = 3;
  cfg.t_max = 3;

  QueryLedger ledger_a, ledger_b;
  VictimHandle victim_a(toy.victim_port, ledger_a);
  VictimHandle victim_b(toy.victim_port, ledger_b);
  RunReport a = run_attack(target, toy.lm, *toy.local, victim_a, cfg);
  RunReport b = run_attack(target, toy.lm, *toy.local, victim_b, cfg);

  CHECK(a.reconstruction == b.reconstruction);
  CHECK(a.iterations_used == b.iterations_used);
  CHECK(a.ledger.online_sentences == b.ledger.online_sentences);
  CHECK(a.ledger.online_tokens == b.ledger.online_tokens);
  REQUIRE(a.conf_trace.size() == b.conf_trace.size());
  for (std::size_t i = 0; i < a.conf_trace.size(); ++i) {
    CHECK(a.conf_trace[i] == b.conf_trace[i]);
  }
}

TEST_CASE("a victim failure aborts the step leaving state untouched") {
  struct FlakyVictim : EmbedderPort {
    std::shared_ptr<EmbedderPort> inner;
    int calls_before_failure;
    int calls = 0;
    FlakyVictim(std::shared_ptr<EmbedderPort> in, int ok_calls)
        : inner(std::move(in)), calls_before_failure(ok_calls) {}
    std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override {
      if (++calls > calls_before_failure) throw std::runtime_error("victim API down");
      return inner->embed_batch(texts);
    }
    int dim() const override { return inner->dim(); }
  };

  auto pool = word_pool(50, 61);
  ExactToy toy(32, 16, random_sentences(pool, 40, 4, 62));
  auto flaky = std::make_shared<FlakyVictim>(toy.victim_port, 1);
  QueryLedger ledger;
  VictimHandle victim(flaky, ledger);
  Embedding target = toy.victim_port->embed(pool[3]);

  AttackConfig cfg;
  cfg.k_s = 40;
  cfg.k_a = 8;
  cfg.k_b = 3;
  cfg.t_max = 4;

  BeamState state;
  state.align = AlignState(toy.local->dim(), victim.dim(), cfg.lambda);
  Candidate root;
  root.tokens = {toy.lm.vocab().bos_id};
  state.live = {root};

  beam_step(state, target, toy.lm, *toy.local, victim, cfg);  // first call succeeds
  BeamState snapshot = state;
  std::uint64_t sentences_before = ledger.online_sentences;

  CHECK_THROWS_AS(beam_step(state, target, toy.lm, *toy.local, victim, cfg),
                  std::runtime_error);
  CHECK(ledger.online_sentences == sentences_before);
  CHECK(state.iteration == snapshot.iteration);
  CHECK(state.live.size() == snapshot.live.size());
  CHECK(state.align.n_pairs == snapshot.align.n_pairs);
  CHECK(state.align.conf_history.size() == snapshot.align.conf_history.size());
}

TEST_CASE("feedback beats the logit-only ablation on an easy in-corpus target") {
  auto pool = word_pool(60, 71);
  auto corpus = random_sentences(pool, 120, 4, 72);
  // Independent victim space: feedback has to be earned through alignment.
  auto local = std::make_shared<HashEmbedder>(96, 3, 1001);
  auto victim_base = std::make_shared<HashEmbedder>(96, 3, 2002);
  auto victim_port = std::make_shared<LinearVictim>(victim_base, 64, 3003);
  NGramLM lm = train_ngram(corpus, 2, 0.1);

  const std::string reference = corpus[17];
  Embedding target = victim_port->embed(reference);

  AttackConfig cfg;
  cfg.k_s = 80;
  cfg.k_a = 30;
  cfg.k_b = 6;
  cfg.t_max = 6;

  QueryLedger ledger_full, ledger_ablate;
  VictimHandle victim_full(victim_port, ledger_full);
  VictimHandle victim_ablate(victim_port, ledger_ablate);

  RunReport full = run_attack(target, lm, *local, victim_full, cfg);
  cfg.force_conf_zero = true;
  RunReport ablate = run_attack(target, lm, *local, victim_ablate, cfg);

  double f1_full = rouge_1(full.reconstruction, reference);
  double f1_ablate = rouge_1(ablate.reconstruction, reference);
  CHECK(f1_full >= f1_ablate);
}
