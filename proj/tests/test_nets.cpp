#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cocolor/nets.hpp"
#include "gradcheck.hpp"

using cocolor::DiscriminatorSpec;
using cocolor::GeneratorSpec;
using cocolor::ModelBundle;
using cocolor::Params;
using cocolor::Rng;
using cocolor::Tape;
using cocolor::Tensor;
using cocolor::Var;

namespace {

std::int64_t total_params(const Params& p) {
  std::int64_t n = 0;
  for (const auto& [name, t] : p.entries) n += t.numel();
  return n;
}

Tensor<double> random_batch(int n, int c, int hw, Rng& rng) {
  Tensor<double> x({n, c, hw, hw});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("generator parameter count") {
  GeneratorSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 3;
  spec.image_size = 64;
  spec.base_channels = 16;
  spec.depth = 4;
  Rng rng(1);
  Params p = cocolor::build_generator(spec, rng);
  REQUIRE(total_params(p) == 393891);
}

TEST_CASE("generator spec validation") {
  GeneratorSpec spec;
  spec.image_size = 48;  // not a power of two
  REQUIRE_THROWS_AS(spec.validate(), cocolor::ShapeError);
  spec.image_size = 8;
  spec.depth = 4;  // 2^4 > 8
  REQUIRE_THROWS_AS(spec.validate(), cocolor::ShapeError);
  spec.depth = 0;
  REQUIRE(spec.resolved_depth() == 1);
  spec.image_size = 256;
  REQUIRE(spec.resolved_depth() == 6);
  spec.in_channels = 2;
  REQUIRE_THROWS_AS(spec.validate(), cocolor::ShapeError);
}

TEST_CASE("init statistics") {
  GeneratorSpec spec;
  spec.image_size = 64;
  spec.base_channels = 16;
  spec.depth = 4;
  Rng rng(17);
  Params p = cocolor::build_generator(spec, rng);
  double sum = 0, sum2 = 0;
  std::int64_t nw = 0;
  for (const auto& [name, t] : p.entries) {
    bool is_w = name.size() >= 2 && name.substr(name.size() - 2) == ".w";
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      if (is_w) {
        sum += t[i];
        sum2 += t[i] * t[i];
        ++nw;
      } else {
        REQUIRE(t[i] == 0.0);
      }
    }
  }
  REQUIRE(nw > 10000);
  double mean = sum / nw;
  double sd = std::sqrt(sum2 / nw - mean * mean);
  REQUIRE(std::abs(mean) < 0.002);
  REQUIRE(std::abs(sd - 0.02) < 0.002);
}

TEST_CASE("build determinism") {
  ModelBundle a = ModelBundle::create(32, 8, 7);
  ModelBundle b = ModelBundle::create(32, 8, 7);
  ModelBundle c = ModelBundle::create(32, 8, 8);
  REQUIRE(a.digest() == b.digest());
  REQUIRE(a.digest() != c.digest());
  REQUIRE(ModelBundle::kNetCount == 8);
  for (int i = 0; i < ModelBundle::kNetCount; ++i) REQUIRE(a.net(i).all_finite());
}

TEST_CASE("generator forward shape and range") {
  GeneratorSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 3;
  spec.image_size = 32;
  spec.base_channels = 8;
  Rng rng(3);
  Params p = cocolor::build_generator(spec, rng);
  Tensor<double> x = random_batch(2, 1, 32, rng);
  Tensor<double> y = cocolor::generator_apply(spec, p, x);
  REQUIRE(y.shape() == std::vector<int>{2, 3, 32, 32});
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    REQUIRE(y[i] > 0.0);
    REQUIRE(y[i] < 1.0);
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  GeneratorSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 3;
  spec.image_size = 16;
  spec.base_channels = 4;
  Rng rng(5);
  Params p = cocolor::build_generator(spec, rng);
  Tensor<double> x = random_batch(3, 1, 16, rng);
  Tensor<double> y = cocolor::generator_apply(spec, p, x);
  for (int n = 0; n < 3; ++n) {
    Tensor<double> xi({1, 1, 16, 16});
    std::int64_t plane = 16 * 16;
    for (std::int64_t i = 0; i < plane; ++i) xi[i] = x[n * plane + i];
    Tensor<double> yi = cocolor::generator_apply(spec, p, xi);
    std::int64_t oplane = 3 * 16 * 16;
    for (std::int64_t i = 0; i < oplane; ++i) REQUIRE(yi[i] == y[n * oplane + i]);
  }
}

TEST_CASE("generator input validation") {
  GeneratorSpec spec;
  spec.image_size = 16;
  spec.base_channels = 4;
  Rng rng(5);
  Params p = cocolor::build_generator(spec, rng);
  Tensor<double> bad_c({1, 3, 16, 16});
  REQUIRE_THROWS_AS(cocolor::generator_apply(spec, p, bad_c), cocolor::ShapeError);
  Tensor<double> bad_hw({1, 1, 8, 8});
  REQUIRE_THROWS_AS(cocolor::generator_apply(spec, p, bad_hw), cocolor::ShapeError);
  Tensor<double> nan({1, 1, 16, 16});
  nan[0] = std::nan("");
  REQUIRE_THROWS_AS(cocolor::generator_apply(spec, p, nan), cocolor::NumericError);
}

TEST_CASE("discriminator patch map") {
  Rng rng(9);
  SECTION("64px three layers") {
    DiscriminatorSpec spec;
    spec.in_channels = 1;
    spec.n_layers = 3;
    spec.base_channels = 8;
    Params p = cocolor::build_discriminator(spec, rng);
    Tensor<double> x = random_batch(2, 1, 64, rng);
    Tape<double> tape;
    auto net = cocolor::lift_params(tape, p, false);
    Var<double> score = cocolor::discriminator_forward(spec, net, cocolor::make_constant(tape, x));
    REQUIRE(score.val().shape() == std::vector<int>{2, 1, 6, 6});
  }
  SECTION("32px two layers") {
    DiscriminatorSpec spec;
    spec.in_channels = 3;
    spec.n_layers = cocolor::default_n_layers(32);
    REQUIRE(spec.n_layers == 2);
    spec.base_channels = 8;
    Params p = cocolor::build_discriminator(spec, rng);
    Tensor<double> x = random_batch(1, 3, 32, rng);
    Tape<double> tape;
    auto net = cocolor::lift_params(tape, p, false);
    Var<double> score = cocolor::discriminator_forward(spec, net, cocolor::make_constant(tape, x));
    REQUIRE(score.val().shape() == std::vector<int>{1, 1, 6, 6});
  }
  SECTION("8px zero layers") {
    REQUIRE(cocolor::default_n_layers(8) == 0);
    DiscriminatorSpec spec;
    spec.in_channels = 1;
    spec.n_layers = 0;
    spec.base_channels = 4;
    Params p = cocolor::build_discriminator(spec, rng);
    Tensor<double> x = random_batch(1, 1, 8, rng);
    Tape<double> tape;
    auto net = cocolor::lift_params(tape, p, false);
    Var<double> score = cocolor::discriminator_forward(spec, net, cocolor::make_constant(tape, x));
    REQUIRE(score.val().shape() == std::vector<int>{1, 1, 6, 6});
  }
}

TEST_CASE("discriminator with zero weights emits its final bias") {
  DiscriminatorSpec spec;
  spec.in_channels = 1;
  spec.n_layers = 2;
  spec.base_channels = 4;
  Rng rng(2);
  Params p = cocolor::build_discriminator(spec, rng);
  for (auto& [name, t] : p.entries)
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
  p.at("final.b")[0] = 0.7;
  Tensor<double> x = random_batch(1, 1, 32, rng);
  Tape<double> tape;
  auto net = cocolor::lift_params(tape, p, false);
  Var<double> score = cocolor::discriminator_forward(spec, net, cocolor::make_constant(tape, x));
  for (std::int64_t i = 0; i < score.val().numel(); ++i)
    REQUIRE(score.val()[i] == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("discriminator rejects wrong channel count") {
  DiscriminatorSpec spec;
  spec.in_channels = 1;
  spec.n_layers = 1;
  spec.base_channels = 4;
  Rng rng(2);
  Params p = cocolor::build_discriminator(spec, rng);
  Tensor<double> x = random_batch(1, 3, 16, rng);
  Tape<double> tape;
  auto net = cocolor::lift_params(tape, p, false);
  REQUIRE_THROWS_AS(cocolor::discriminator_forward(spec, net, cocolor::make_constant(tape, x)),
                    cocolor::ShapeError);
}

TEST_CASE("generator gradients match finite differences") {
  GeneratorSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 3;
  spec.image_size = 8;
  spec.base_channels = 4;
  spec.depth = 2;
  Rng rng(21);
  Params proto = cocolor::build_generator(spec, rng);

  Tensor<double> x = random_batch(1, 1, 8, rng);
  Tensor<double> probe({1, 3, 8, 8});
  for (std::int64_t i = 0; i < probe.numel(); ++i) probe[i] = rng.uniform(-1.0, 1.0);

  std::vector<Tensor<double>> leaves;
  leaves.push_back(x);
  for (const auto& [name, t] : proto.entries) leaves.push_back(t);

  auto build = [&](Tape<double>& tape, const std::vector<Var<double>>& in) {
    cocolor::TapedNet net;
    for (std::size_t i = 1; i < in.size(); ++i) net.v.push_back(in[i]);
    Var<double> y = cocolor::generator_forward(spec, net, in[0]);
    return cocolor::mean_all(mul(y, cocolor::make_constant(tape, probe)));
  };
  REQUIRE(gradtest::max_rel_err(leaves, build) < 1e-3);
}

TEST_CASE("discriminator gradients match finite differences") {
  DiscriminatorSpec spec;
  spec.in_channels = 1;
  spec.n_layers = 1;
  spec.base_channels = 4;
  Rng rng(23);
  Params proto = cocolor::build_discriminator(spec, rng);
  Tensor<double> x = random_batch(1, 1, 8, rng);

  std::vector<Tensor<double>> leaves;
  leaves.push_back(x);
  for (const auto& [name, t] : proto.entries) leaves.push_back(t);

  auto build = [&](Tape<double>& tape, const std::vector<Var<double>>& in) {
    cocolor::TapedNet net;
    for (std::size_t i = 1; i < in.size(); ++i) net.v.push_back(in[i]);
    Var<double> score = cocolor::discriminator_forward(spec, net, in[0]);
    return cocolor::mean_all(square(score));
  };
  REQUIRE(gradtest::max_rel_err(leaves, build) < 1e-3);
}

TEST_CASE("params digest and lookup") {
  GeneratorSpec spec;
  spec.image_size = 16;
  spec.base_channels = 4;
  Rng rng(1);
  Params p = cocolor::build_generator(spec, rng);
  REQUIRE_THROWS_AS(p.at("nonexistent.w"), cocolor::ShapeError);
  std::uint64_t d0 = p.digest();
  p.at("enc1.w")[0] += 1e-9;
  REQUIRE(p.digest() != d0);
}
