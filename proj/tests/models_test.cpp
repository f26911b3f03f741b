#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "ucds/errors.hpp"
#include "ucds/models.hpp"

using namespace ucds;
using testutil::TempDir;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.latent_dim_mf = 3;
  c.latent_dim_mlp = 2;
  c.layers = {4, 3};
  c.l2_regularization = 1e-3;
  return c;
}

void randomize(ParamSet& params, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (auto& t : params)
    for (auto& v : t.values) v = n(rng);
}

std::vector<TrainingExample> random_batch(std::size_t size, std::size_t users,
                                          std::size_t items, std::mt19937_64& rng) {
  std::vector<TrainingExample> batch;
  for (std::size_t k = 0; k < size; ++k)
    batch.push_back({static_cast<UserIndex>(rng() % users),
                     static_cast<ItemIndex>(rng() % items),
                     static_cast<double>(rng() % 2)});
  return batch;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("config validation names the key") {
  TrainConfig c;
  c.validate();
  c.layers = {10, 8};
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "layers");
  }
  c = TrainConfig{};
  c.adam_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_model_kind("vae"), ConfigError);
  CHECK(parse_model_kind("neumf") == ModelKind::neumf);
}

TEST_CASE("init_model is deterministic and shaped by the config") {
  TrainConfig c;
  Rng a = make_rng(1, rng_stream::model_init), b = make_rng(1, rng_stream::model_init);
  const auto m1 = init_model(ModelKind::neumf, c, 7, 11, a);
  const auto m2 = init_model(ModelKind::neumf, c, 7, 11, b);
  CHECK(m1->params() == m2->params());
  CHECK(m1->embedding_dim() == 16);  // mf 8 + mlp 8
  for (const auto& t : m1->params()) {
    if (t.name.find("bias") != std::string::npos)
      for (double v : t.values) CHECK(v == 0.0);
  }
  CHECK(m1->params()[0].rows == 7);
  Rng c2 = make_rng(1, rng_stream::model_init);
  const auto pmf = init_model(ModelKind::pmf, c, 7, 11, c2);
  CHECK(pmf->embedding_dim() == 8);
}

TEST_CASE("PMF score is the dot product") {
  TrainConfig c;
  c.latent_dim_mf = 2;
  auto m = make_zero_model(ModelKind::pmf, c, 1, 1);
  m->params()[0].values = {1.0, 2.0};
  m->params()[1].values = {3.0, 4.0};
  CHECK(m->score(0, 0) == 11.0);
  CHECK_THROWS(m->score(1, 0));
}

TEST_CASE("zero NeuMF scores one half and has BCE ln 2") {
  const auto m = make_zero_model(ModelKind::neumf, TrainConfig{}, 4, 4);
  CHECK(m->score(2, 3) == 0.5);
  TrainConfig c;
  c.l2_regularization = 0.0;
  const auto m0 = make_zero_model(ModelKind::neumf, c, 4, 4);
  std::vector<TrainingExample> batch{{0, 1, 1.0}, {2, 3, 0.0}};
  ParamSet g = zeros_like(m0->params());
  CHECK(m0->loss_and_grad(batch, g) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("NeuMF scores stay inside (0, 1)") {
  std::mt19937_64 rng(3);
  Rng init = make_rng(3, rng_stream::model_init);
  auto m = init_model(ModelKind::neumf, small_config(), 5, 5, init);
  for (int trial = 0; trial < 1000; ++trial) {
    randomize(m->params(), rng, 0.5);
    const double s = m->score(rng() % 5, rng() % 5);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("loss without regularization is mean BCE") {
  TrainConfig c;
  c.latent_dim_mf = 2;
  c.l2_regularization = 0.0;
  auto m = make_zero_model(ModelKind::pmf, c, 2, 2);
  m->params()[0].values = {1.0, 0.0, 0.0, 1.0};
  m->params()[1].values = {2.0, 0.0, 0.0, -1.0};
  std::vector<TrainingExample> batch{{0, 0, 1.0}, {1, 1, 0.0}, {0, 1, 1.0}};
  double expected = 0.0;
  for (const auto& ex : batch) {
    const double p = sigmoid(m->score(ex.user, ex.item));
    expected -= ex.label * std::log(p) + (1 - ex.label) * std::log(1 - p);
  }
  ParamSet g = zeros_like(m->params());
  CHECK(m->loss_and_grad(batch, g) == doctest::Approx(expected / 3).epsilon(1e-12));
}

TEST_CASE("backbone gradients match finite differences") {
  for (ModelKind kind : {ModelKind::pmf, ModelKind::neumf}) {
    CAPTURE(to_string(kind));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      Rng init = make_rng(seed, rng_stream::model_init);
      auto m = init_model(kind, small_config(), 4, 5, init);
      randomize(m->params(), rng, 0.5);
      const auto batch = random_batch(5, 4, 5, rng);
      ParamSet analytic = zeros_like(m->params());
      m->loss_and_grad(batch, analytic);
      ParamSet scratch = zeros_like(m->params());
      const double err = oracle::max_relative_error(m->params(), analytic, [&] {
        return m->loss_and_grad(batch, scratch);
      });
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("user_embedding length and update") {
  Rng init = make_rng(1, rng_stream::model_init);
  auto m = init_model(ModelKind::neumf, small_config(), 3, 3, init);
  const auto before = m->user_embedding(1);
  CHECK(before.size() == 5);
  AdamState state = AdamState::for_params(m->params());
  ParamSet g = zeros_like(m->params());
  m->loss_and_grad(std::vector<TrainingExample>{{1, 2, 1.0}}, g);
  adam_step(state, m->params(), g, 0.01);
  CHECK(m->user_embedding(1) != before);
}

TEST_CASE("adam first step moves against the gradient by lr") {
  ParamSet params{Tensor("w", 1, 1)};
  ParamSet grads{Tensor("w", 1, 1)};
  grads[0].values[0] = 1.0;
  AdamState state = AdamState::for_params(params);
  adam_step(state, params, grads, 0.01);
  CHECK(params[0].values[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradient from fresh state changes nothing") {
  ParamSet params{Tensor("w", 2, 2)};
  params[0].values = {1.0, -2.0, 3.0, 0.5};
  const auto before = params;
  AdamState state = AdamState::for_params(params);
  adam_step(state, params, zeros_like(params), 0.01);
  CHECK(params == before);
}

TEST_CASE("adam is deterministic, bounded by lr, and rejects non-finite gradients") {
  std::mt19937_64 rng(5);
  ParamSet p1{Tensor("w", 3, 4)}, p2;
  randomize(p1, rng, 1.0);
  p2 = p1;
  AdamState s1 = AdamState::for_params(p1), s2 = s1;
  for (int step = 0; step < 20; ++step) {
    ParamSet g = zeros_like(p1);
    randomize(g, rng, 1.0);
    const auto before = p1;
    adam_step(s1, p1, g, 1e-3);
    adam_step(s2, p2, g, 1e-3);
    // Per-step movement is roughly bounded by lr * (1 - beta1) / sqrt(1 - beta2).
    for (std::size_t k = 0; k < p1[0].values.size(); ++k)
      CHECK(std::abs(p1[0].values[k] - before[0].values[k]) <= 4e-3);
  }
  CHECK(p1 == p2);

  ParamSet g = zeros_like(p1);
  g[0].values[3] = std::nan("");
  const auto before = p1;
  CHECK_THROWS_AS(adam_step(s1, p1, g, 1e-3), NumericError);
  CHECK(p1 == before);
}

TEST_CASE("adam step shrinks with lr") {
  std::mt19937_64 rng(6);
  ParamSet base{Tensor("w", 2, 3)};
  randomize(base, rng, 1.0);
  ParamSet g = zeros_like(base);
  randomize(g, rng, 1.0);
  for (double lr : {1e-2, 1e-4, 1e-6}) {
    ParamSet p = base;
    AdamState s = AdamState::for_params(p);
    adam_step(s, p, g, lr);
    for (std::size_t k = 0; k < p[0].values.size(); ++k)
      CHECK(std::abs(p[0].values[k] - base[0].values[k]) <= lr * (1 + 1e-9));
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  TempDir dir;
  std::mt19937_64 rng(8);
  Rng init = make_rng(8, rng_stream::model_init);
  auto m = init_model(ModelKind::neumf, small_config(), 4, 6, init);
  randomize(m->params(), rng, 1.0);
  AdamState state = AdamState::for_params(m->params());
  ParamSet g = zeros_like(m->params());
  randomize(g, rng, 1.0);
  adam_step(state, m->params(), g, 0.01);
  CheckpointMeta meta{"abcd1234", {{"epoch", "3"}}};
  save_checkpoint(dir / "m.ckpt", *m, state, meta);

  const auto loaded = load_checkpoint(dir / "m.ckpt", ModelKind::neumf);
  CHECK(loaded.model->params() == m->params());
  CHECK(loaded.model->config() == m->config());
  CHECK(loaded.state == state);
  CHECK(loaded.meta == meta);
  CHECK(loaded.model->score(1, 2) == m->score(1, 2));

  try {
    load_checkpoint(dir / "m.ckpt", ModelKind::pmf);
    FAIL("expected kind mismatch");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrc::checkpoint_kind);
  }

  const auto bytes = testutil::read_file(dir / "m.ckpt");
  {
    std::ofstream out(dir / "cut.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    load_checkpoint(dir / "cut.ckpt");
    FAIL("expected checksum error");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrc::checkpoint_checksum);
  }

  auto bumped = bytes;
  bumped[8] = static_cast<char>(2);  // version field follows the 8-byte magic
  {
    std::ofstream out(dir / "v2.ckpt", std::ios::binary);
    out.write(bumped.data(), static_cast<std::streamsize>(bumped.size()));
  }
  try {
    load_checkpoint(dir / "v2.ckpt");
    FAIL("expected version error");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrc::checkpoint_version);
  }
}

TEST_CASE("both backbones fit a separable toy log") {
  // User u likes item u and nothing else.
  std::vector<TrainingExample> batch;
  for (UserIndex u = 0; u < 5; ++u)
    for (ItemIndex i = 0; i < 5; ++i) batch.push_back({u, i, u == i ? 1.0 : 0.0});
  for (ModelKind kind : {ModelKind::pmf, ModelKind::neumf}) {
    CAPTURE(to_string(kind));
    TrainConfig c = small_config();
    c.latent_dim_mf = 8;
    c.l2_regularization = 0.0;
    Rng init = make_rng(1, rng_stream::model_init);
    auto m = init_model(kind, c, 5, 5, init);
    AdamState state = AdamState::for_params(m->params());
    double loss = 1.0;
    for (int epoch = 0; epoch < 200; ++epoch) {
      ParamSet g = zeros_like(m->params());
      loss = m->loss_and_grad(batch, g);
      adam_step(state, m->params(), g, 0.05);
    }
    ParamSet g = zeros_like(m->params());
    loss = m->loss_and_grad(batch, g);
    CHECK(loss < 0.1);
  }
}

}  // TEST_SUITE
