#include "embinv/embed.hpp"

#include <doctest.h>

#include <random>

using namespace embinv;

namespace {

std::string random_word(std::mt19937_64& rng, int len) {
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng() % 26));
  return s;
}

struct FailingEmbedder : EmbedderPort {
  std::vector<Embedding> embed_batch(const std::vector<std::string>&) override {
    throw std::runtime_error("backend unavailable");
  }
  int dim() const override { return 4; }
};

}  // namespace

TEST_CASE("hash embeddings are deterministic and unit norm") {
  HashEmbedder e(128, 3, 42);
  Embedding a = e.embed_one("hello");
  Embedding b = e.embed_one("hello");
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Embedding v = e.embed_one(random_word(rng, 2 + static_cast<int>(rng() % 10)));
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("empty text falls back to the first basis vector") {
  HashEmbedder e(16, 3, 0);
  Embedding v = e.embed_one("");
  CHECK(v[0] == 1.0);
  CHECK(v.norm() == doctest::Approx(1.0));
}

TEST_CASE("case folding makes embeddings case-insensitive") {
  HashEmbedder e(64, 3, 9);
  CHECK((e.embed_one("Hello World") - e.embed_one("hello world")).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("different seeds give decorrelated spaces") {
  HashEmbedder e1(256, 3, 1);
  HashEmbedder e2(256, 3, 2);
  std::mt19937_64 rng(11);
  double total = 0.0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    std::string word = random_word(rng, 4 + static_cast<int>(rng() % 8));
    total += cosine(hash_embed(e1, word), hash_embed(e2, word));
  }
  CHECK(total / trials < 0.9);
}

TEST_CASE("linear victim equals an explicit matrix multiply") {
  auto base = std::make_shared<HashEmbedder>(64, 3, 5);
  LinearVictim victim(base, 24, 77);
  CHECK(victim.dim() == 24);

  for (const std::string& text : {"alpha beta", "gamma", "delta epsilon zeta"}) {
    Embedding expected = victim.map_matrix().transpose() * base->embed_one(text);
    Embedding got = victim.embed(text);
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-15);
  }

  LinearVictim again(base, 24, 77);
  CHECK((again.map_matrix() - victim.map_matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear victim validates dimensions") {
  auto base = std::make_shared<HashEmbedder>(16, 3, 5);
  CHECK_THROWS_AS(LinearVictim(base, 17, 1), std::invalid_argument);
  CHECK_THROWS_AS(LinearVictim(base, 0, 1), std::invalid_argument);
}

TEST_CASE("victim handle counts sentences and whitespace tokens") {
  auto inner = std::make_shared<HashEmbedder>(32, 3, 0);
  QueryLedger ledger;
  VictimHandle handle(inner, ledger);

  handle.query({"one two three four", "a b c d e", "w x y z u v"});
  CHECK(ledger.online_sentences == 3);
  CHECK(ledger.online_tokens == 15);
  CHECK(ledger.offline_sentences == 0);

  handle.query({"solo"});
  CHECK(ledger.online_sentences == 4);
  CHECK(ledger.online_tokens == 16);
}

TEST_CASE("victim handle without defense returns inner embeddings exactly") {
  auto inner = std::make_shared<HashEmbedder>(32, 3, 0);
  QueryLedger ledger;
  VictimHandle handle(inner, ledger);
  CHECK(handle.deterministic());
  auto out = handle.query({"check me"});
  CHECK((out.front() - inner->embed_one("check me")).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("failed victim calls leave the ledger untouched") {
  auto inner = std::make_shared<FailingEmbedder>();
  QueryLedger ledger;
  VictimHandle handle(inner, ledger);
  CHECK_THROWS_AS(handle.query({"anything"}), std::runtime_error);
  CHECK(ledger.online_sentences == 0);
  CHECK(ledger.online_tokens == 0);
  CHECK_THROWS_AS(handle.query({}), std::invalid_argument);
}

TEST_CASE("victim handle accounting matches the number of texts across calls") {
  auto inner = std::make_shared<HashEmbedder>(16, 3, 0);
  QueryLedger ledger;
  VictimHandle handle(inner, ledger);
  std::mt19937_64 rng(21);
  std::uint64_t expected = 0;
  for (int round = 0; round < 20; ++round) {
    std::vector<std::string> texts;
    int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) texts.push_back(random_word(rng, 3));
    handle.query(texts);
    expected += static_cast<std::uint64_t>(n);
  }
  CHECK(ledger.online_sentences == expected);
}

TEST_CASE("defended handle applies noise and is flagged non-deterministic") {
  auto inner = std::make_shared<HashEmbedder>(48, 3, 0);
  QueryLedger ledger;
  DefenseSpec defense;
  defense.kind = DefenseKind::LapMech;
  defense.eps_per_dim = 1.0;
  defense.seed = 3;
  VictimHandle handle(inner, ledger, QueryPhase::Online, defense);
  CHECK_FALSE(handle.deterministic());

  auto first = handle.query({"same text"});
  auto second = handle.query({"same text"});
  CHECK((first.front() - second.front()).cwiseAbs().maxCoeff() > 0.0);
  CHECK(first.front().norm() == doctest::Approx(1.0).epsilon(1e-6));
}
