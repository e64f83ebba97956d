#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "spt/errors.hpp"
#include "spt/io.hpp"
#include "spt/tensor.hpp"
#include "test_support.hpp"

using namespace spt;
using spt::testing::gradient_check;
using spt::testing::random_tensor;

namespace {

Tensor row(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({1, n}, std::move(v));
}

AttentionMask mask_row(std::vector<std::uint8_t> bits) {
  const auto n = bits.size();
  return AttentionMask::from_bits(1, n, std::move(bits));
}

// Plain softmax, written independently of the masked kernel.
std::vector<double> reference_softmax(std::span<const double> x) {
  double peak = x[0];
  for (double v : x) peak = std::max(peak, v);
  std::vector<double> y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (y[i] = std::exp(x[i] - peak));
  for (auto& v : y) v /= total;
  return y;
}

AttentionMask random_mask(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<std::uint8_t> bits(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) bits[r * cols + c] = rng.uniform() < 0.5;
    bits[r * cols + rng.below(cols)] = 1;
  }
  return AttentionMask::from_bits(rows, cols, std::move(bits));
}

}  // namespace

TEST_CASE("matmul") {
  const Tensor identity({2, 2}, {1, 0, 0, 1});
  const Tensor b({2, 2}, {3, 4, 5, 6});
  const auto ib = matmul(identity, b);
  CHECK(std::vector<double>(ib.data().begin(), ib.data().end()) == std::vector<double>{3, 4, 5, 6});

  const auto c = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.item() == 1 * 3 + 2 * 4);

  Rng rng(7);
  const auto z = matmul(Tensor::zeros({2, 3}), random_tensor({3, 2}, rng));
  for (double v : z.data()) CHECK(v == 0.0);

  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("rowwise_masked_softmax examples") {
  SUBCASE("full support") {
    const auto y = rowwise_masked_softmax(row({1, 2, 3}), mask_row({1, 1, 1}));
    const double total = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(y[0] == doctest::Approx(std::exp(1.0) / total).epsilon(1e-12));
    CHECK(y[0] == doctest::Approx(0.09003).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(y[2] == doctest::Approx(0.66524).epsilon(1e-4));
  }
  SUBCASE("middle column masked") {
    const auto y = rowwise_masked_softmax(row({1, 2, 3}), mask_row({1, 0, 1}));
    CHECK(y[0] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
    CHECK(y[0] == doctest::Approx(0.11920).epsilon(1e-4));
    CHECK(y[1] == 0.0);
    CHECK(y[2] == doctest::Approx(0.88080).epsilon(1e-4));
  }
  SUBCASE("single entry") {
    CHECK(rowwise_masked_softmax(row({-42.5}), mask_row({1})).item() == 1.0);
  }
  SUBCASE("huge masked logit does not starve live entries") {
    const auto y = rowwise_masked_softmax(row({1e308, 0.0, 1.0}), mask_row({0, 1, 1}));
    CHECK(y[0] == 0.0);
    CHECK(y[1] + y[2] == doctest::Approx(1.0));
  }
  SUBCASE("degenerate row") {
    CHECK_THROWS_AS(mask_row({0, 0, 0}), DegenerateRowError);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(rowwise_masked_softmax(row({1, 2}), mask_row({1, 1, 1})), DimensionError);
  }
}

TEST_CASE("rowwise_masked_softmax properties") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(8);
    const auto logits = random_tensor({rows, cols}, rng, -20.0, 20.0);
    const auto mask = random_mask(rows, cols, rng);
    const auto y = rowwise_masked_softmax(logits, mask);

    const double shift = rng.uniform(-50.0, 50.0);
    const auto shifted = rowwise_masked_softmax(add(logits, Tensor::scalar(shift)), mask);
    const auto dense = rowwise_masked_softmax(logits, AttentionMask::ones(rows, cols));

    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        if (mask.at(r, c)) {
          total += y.at(r, c);
        } else {
          CHECK(y.at(r, c) == 0.0);
          CHECK(!std::signbit(y.at(r, c)));
        }
        CHECK(std::abs(shifted.at(r, c) - y.at(r, c)) < 1e-9);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
      const auto ref = reference_softmax(logits.data().subspan(r * cols, cols));
      for (std::size_t c = 0; c < cols; ++c) CHECK(std::abs(dense.at(r, c) - ref[c]) < 1e-12);
    }
  }
}

TEST_CASE("elementwise") {
  const auto gated = elementwise(Tensor({3}, {1, 2, 3}), Tensor({3}, {1, 0, 1}), ElementwiseOp::mul);
  CHECK(std::vector<double>(gated.data().begin(), gated.data().end()) == std::vector<double>{1, 0, 3});
  const auto s = elementwise(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}), ElementwiseOp::add);
  CHECK(s[0] == 4);
  CHECK(s[1] == 6);

  Rng rng(3);
  const auto x = random_tensor({3, 4}, rng);
  const auto same = mul(x, Tensor::ones({3, 4}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

  const auto scaled = mul(Tensor::scalar(2.0), x);
  CHECK(scaled.shape() == x.shape());
  CHECK(scaled[5] == 2.0 * x[5]);

  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("layer_norm") {
  const auto ones = Tensor::ones({2});
  const auto zeros = Tensor::zeros({2});
  SUBCASE("constant rows normalize to zero") {
    const auto y = layer_norm(Tensor::full({3, 2}, 5.0), ones, zeros);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("hand computed") {
    // mean 2, variance 1: (x - 2) / sqrt(1 + 1e-5)
    const auto y = layer_norm(Tensor({2}, {1, 3}), ones, zeros);
    CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("zero gain broadcasts the bias") {
    Rng rng(5);
    const Tensor bias({2}, {0.25, -3.0});
    const auto y = layer_norm(random_tensor({4, 2}, rng), zeros, bias);
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(y.at(r, 0) == 0.25);
      CHECK(y.at(r, 1) == -3.0);
    }
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), ones, zeros), DimensionError);
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    const auto p = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(p);
    }
    const auto g = backward(loss, tape).grad(p);
    for (double v : g.data()) CHECK(v == 1.0);
  }
  SUBCASE("sum of squares") {
    const auto p = Tensor::parameter({2}, {1, 2});
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(mul(p, p));
    }
    const auto g = backward(loss, tape).grad(p);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 4.0);
  }
  SUBCASE("matmul chain against finite differences") {
    Rng rng(11);
    const std::vector<Tensor> inputs{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                                     random_tensor({2, 3}, rng)};
    const auto err = gradient_check(
        [](const std::vector<Tensor>& in) { return sum(mul(matmul(matmul(in[0], in[1]), in[2]), Tensor::full({3, 3}, 0.5))); },
        inputs);
    CHECK(err < 1e-4);
  }
  SUBCASE("non-scalar loss") {
    Tape tape;
    CHECK_THROWS_AS(backward(Tensor::zeros({2}), tape), ContractError);
  }
}

TEST_CASE("tape bookkeeping") {
  const auto p = Tensor::parameter({2}, {1.5, -2.0});
  const auto constant = Tensor({2}, {3.0, 4.0});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    // p feeds three consumers; gradients must add up.
    const auto a = mul(p, constant);
    const auto b = mul(p, p);
    loss = sum(add(add(a, b), p));
    // Constant-only work is not recorded.
    (void)add(constant, constant);
  }
  CHECK(tape.size() == 5);
  const auto g = backward(loss, tape).grad(p);
  CHECK(g[0] == doctest::Approx(3.0 + 2 * 1.5 + 1.0));
  CHECK(g[1] == doctest::Approx(4.0 + 2 * -2.0 + 1.0));

  // Without an active tape nothing is tracked.
  const auto untracked = mul(p, p);
  CHECK_FALSE(untracked.requires_grad());
}

TEST_CASE("every differentiable op matches finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(4), k = 1 + rng.below(4);
    const auto weights = random_tensor({m, n}, rng);  // fixed projection to a scalar
    auto project = [weights](const Tensor& t) { return sum(mul(t, weights)); };

    const std::vector<std::pair<const char*, std::pair<testing::ScalarFn, std::vector<Tensor>>>> cases{
        {"matmul", {[&](const auto& in) { return project(matmul(in[0], in[1])); },
                    {random_tensor({m, k}, rng), random_tensor({k, n}, rng)}}},
        {"transpose", {[&](const auto& in) { return project(transpose(in[0])); }, {random_tensor({n, m}, rng)}}},
        {"add", {[&](const auto& in) { return project(add(in[0], in[1])); },
                 {random_tensor({m, n}, rng), random_tensor({m, n}, rng)}}},
        {"mul", {[&](const auto& in) { return project(mul(in[0], in[1])); },
                 {random_tensor({m, n}, rng), random_tensor({m, n}, rng)}}},
        {"scalar mul", {[&](const auto& in) { return project(mul(in[0], in[1])); },
                        {random_tensor({}, rng), random_tensor({m, n}, rng)}}},
        {"scale", {[&](const auto& in) { return project(scale(in[0], -1.7)); }, {random_tensor({m, n}, rng)}}},
        {"softmax", {[&, mask = random_mask(m, n, rng)](const auto& in) {
                       return project(rowwise_masked_softmax(in[0], mask));
                     },
                     {random_tensor({m, n}, rng, -3, 3)}}},
        {"layer_norm", {[&](const auto& in) { return project(layer_norm(in[0], in[1], in[2])); },
                        {random_tensor({m, n}, rng, -2, 2), random_tensor({n}, rng), random_tensor({n}, rng)}}},
        {"gelu", {[&](const auto& in) { return project(gelu(in[0])); }, {random_tensor({m, n}, rng, -3, 3)}}},
        {"linear", {[&](const auto& in) { return project(linear(in[0], in[1], in[2])); },
                    {random_tensor({m, k}, rng), random_tensor({k, n}, rng), random_tensor({n}, rng)}}},
        {"slices and concat", {[&](const auto& in) {
                                 const std::vector<Tensor> cols{slice_cols(in[0], 0, 1), in[1]};
                                 const auto joined = concat_cols(cols);
                                 const std::vector<Tensor> rows{slice_rows(joined, 0, 1), joined};
                                 return sum(mul(concat_rows(rows), concat_rows(rows)));
                               },
                               {random_tensor({m, 2}, rng), random_tensor({m, n}, rng)}}},
        {"stack select reshape", {[&](const auto& in) {
                                    const std::vector<Tensor> parts{in[0], in[1]};
                                    const auto s = stack(parts);
                                    return project(mul(select(s, 1), reshape(reshape(in[0], {m * n}), {m, n})));
                                  },
                                  {random_tensor({m, n}, rng), random_tensor({m, n}, rng)}}},
        {"mean", {[&](const auto& in) { return mean(mul(in[0], in[0])); }, {random_tensor({m, n}, rng)}}},
    };
    for (const auto& [name, c] : cases) {
      CAPTURE(name);
      CHECK(gradient_check(c.first, c.second) < 1e-4);
    }
  }
}

TEST_CASE("binary tensor format") {
  SUBCASE("byte layout") {
    std::ostringstream out;
    write_tensor_binary(out, Tensor({1, 2}, {1.0, -2.0}));
    const auto bytes = out.str();
    REQUIRE(bytes.size() == 4 + 4 + 2 * 4 + 2 * 8);
    CHECK(bytes.substr(0, 4) == "SPT1");
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 1);
    CHECK(bytes[12] == 2);
    // 1.0 = 0x3FF0000000000000, little-endian.
    CHECK(static_cast<unsigned char>(bytes[16 + 7]) == 0x3F);
    CHECK(static_cast<unsigned char>(bytes[16 + 6]) == 0xF0);
  }
  SUBCASE("round trip is exact") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      Shape shape;
      for (std::size_t r = rng.below(4); r > 0; --r) shape.push_back(1 + rng.below(5));
      const auto t = random_tensor(shape, rng, -1e6, 1e6);
      std::stringstream buf;
      write_tensor_binary(buf, t);
      const auto back = read_tensor_binary(buf);
      CHECK(back.shape() == t.shape());
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
    }
  }
  SUBCASE("bad magic") {
    std::istringstream in("NOPE");
    CHECK_THROWS_AS(read_tensor_binary(in), ValidationError);
  }
}

TEST_CASE("csv and netpbm exports") {
  CHECK(tensor_to_csv(Tensor({2, 2}, {0.1, 1, -2, 3})) == "0.10000000000000001,1\n-2,3\n");

  const auto dir = std::filesystem::temp_directory_path() / "spt_test_io";
  std::filesystem::create_directories(dir);
  const auto mask = AttentionMask::from_bits(2, 3, {1, 0, 1, 0, 1, 1});
  save_pbm(dir / "m.pbm", mask, "digest abc");
  CHECK(load_pbm(dir / "m.pbm") == mask);

  const Tensor image({2, 2}, {0.0, 1.0, 0.5, 2.0});
  save_pgm(dir / "i.pgm", image, "comment");
  const auto back = load_pgm(dir / "i.pgm");
  CHECK(back.shape() == Shape{1, 2, 2});
  CHECK(back[1] == 1.0);
  CHECK(back[2] == doctest::Approx(128.0 / 255.0));
  CHECK(back[3] == 1.0);

  const auto norm = min_max_normalize(Tensor({3}, {2.0, 4.0, 3.0}));
  CHECK(norm[0] == 0.0);
  CHECK(norm[1] == 1.0);
  CHECK(norm[2] == 0.5);
  std::filesystem::remove_all(dir);
}
