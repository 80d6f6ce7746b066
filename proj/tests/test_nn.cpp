#include <cmath>
#include <random>

#include "doctest.h"
#include "pcc/network.h"
#include "pcc/optim.h"
#include "test_support.h"

using namespace pcc;
using nn::LayerSpec;
using nn::Network;
using nn::Tape;
using nn::Tensor;
using nn::TensorPtr;

namespace {

TensorPtr tensor_of(std::vector<double> v, int64_t rows, int64_t cols, bool grad = false) {
  auto t = nn::make_tensor(rows, cols, grad);
  t->val = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("MLP with identity weights passes the input through") {
  Network net({LayerSpec::mlp({2, 2}, /*activate_output=*/false)}, 1);
  net.params()[0]->val = {1, 0, 0, 1};
  net.params()[1]->val = {0, 0};
  Tensor in(1, 2);
  in.val = {1, 0};
  const Tensor out = net.eval(in, 1);
  CHECK(out.val[0] == doctest::Approx(1.0));
  CHECK(out.val[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax of a zero row is uniform") {
  Tape tape;
  auto x = tape.leaf(tensor_of(std::vector<double>(7, 0.0), 1, 7));
  auto p = tape.softmax_rows(x);
  for (int j = 0; j < 7; ++j) CHECK(p->val[j] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("shared chain with rectifier evaluates per point") {
  // widths [3,1], weights (1,1,1), bias 0: (1,2,3) -> 6, (-1,-1,-1) -> 0.
  Network net({LayerSpec::smlp({3, 1}, /*activate_output=*/true)}, 1);
  net.params()[0]->val = {1, 1, 1};
  net.params()[1]->val = {0};
  Tensor in(2, 3);
  in.val = {1, 2, 3, -1, -1, -1};
  const Tensor out = net.eval(in, 1);
  CHECK(out.val[0] == doctest::Approx(6.0));
  CHECK(out.val[1] == doctest::Approx(0.0));
}

TEST_CASE("backward of a linear product returns the partner value") {
  Tape tape;
  auto w = tape.leaf(tensor_of({2.0}, 1, 1, true));
  auto x = tape.leaf(tensor_of({3.0}, 1, 1, false));
  auto bias = tape.leaf(tensor_of({0.0}, 1, 1, false));
  auto y = tape.linear(x, w, bias);
  tape.backward(y);
  CHECK(w->grad[0] == doctest::Approx(3.0));
}

TEST_CASE("sigmoid-times-L gradient at zero") {
  Tape tape;
  auto y = tape.leaf(tensor_of({0.0}, 1, 1, true));
  auto s = tape.scale(tape.sigmoid(y), 7.0);
  tape.backward(s);
  CHECK(y->grad[0] == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("backward twice on one tape is rejected") {
  Tape tape;
  auto y = tape.leaf(tensor_of({0.5}, 1, 1, true));
  auto s = tape.sigmoid(y);
  auto sum = tape.sum_all(s);
  tape.backward(sum);
  CHECK_THROWS_AS(tape.backward(sum), std::logic_error);
}

TEST_CASE("shape mismatch reports the offending layer") {
  Network net({LayerSpec::smlp({4, 2})}, 1);
  Tensor in(2, 3);
  CHECK_THROWS_WITH_AS(net.eval(in, 1), doctest::Contains("layer 0"), std::invalid_argument);
}

TEST_CASE("pool over points is permutation invariant") {
  Network net({LayerSpec::smlp({3, 8, 16}), LayerSpec::pool()}, 3);
  Tensor in(6, 3);
  std::mt19937_64 rng(11);
  for (auto& v : in.val) v = 2.0 * unit_double(rng) - 1.0;
  const Tensor a = net.eval(in, 1);
  Tensor shuffled = in;
  // rotate rows
  std::rotate(shuffled.val.begin(), shuffled.val.begin() + 3 * 2, shuffled.val.end());
  const Tensor b = net.eval(shuffled, 1);
  REQUIRE(a.size() == b.size());
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a.val[i] == b.val[i]);
}

TEST_CASE("forward is deterministic") {
  Network net({LayerSpec::sapp(4, {3, 8, 16}), LayerSpec::concat_input(),
               LayerSpec::smlp({19, 8, 4}, false), LayerSpec::pool()},
              21);
  Tensor in(12, 3);
  std::mt19937_64 rng(5);
  for (auto& v : in.val) v = unit_double(rng);
  const Tensor a = net.eval(in, 2);
  const Tensor b = net.eval(in, 2);
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a.val[i] == b.val[i]);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Tape tape;
  std::mt19937_64 rng(3);
  auto x = tape.alloc(40, 7, false);
  for (auto& v : x->val) v = 20.0 * (unit_double(rng) - 0.5);
  auto p = tape.softmax_rows(x);
  for (int64_t r = 0; r < p->rows; ++r) {
    double sum = 0;
    for (int64_t j = 0; j < 7; ++j) {
      CHECK(p->val[r * 7 + j] > 0.0);
      sum += p->val[r * 7 + j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("gradients agree with finite differences per layer kind") {
  std::vector<std::pair<const char*, Network>> nets;
  nets.emplace_back("smlp", Network({LayerSpec::smlp({3, 5, 4}, false)}, 2));
  nets.emplace_back("mlp+relu", Network({LayerSpec::mlp({3, 6, 2}, true)}, 3));
  nets.emplace_back("sapp", Network({LayerSpec::sapp(3, {3, 4, 6})}, 4));
  nets.emplace_back("pool", Network({LayerSpec::smlp({3, 8}), LayerSpec::pool()}, 5));
  nets.emplace_back("softmax", Network({LayerSpec::smlp({3, 14}, false), LayerSpec::reshape(7),
                                        LayerSpec::softmax_last()},
                                       6));
  nets.emplace_back("sigmoid", Network({LayerSpec::smlp({3, 4}, false), LayerSpec::sigmoid()}, 7));
  nets.emplace_back("concat", Network({LayerSpec::smlp({3, 4}), LayerSpec::concat_input(),
                                       LayerSpec::smlp({7, 3}, false)},
                                      8));
  std::mt19937_64 rng(99);
  for (auto& [name, net] : nets) {
    CAPTURE(name);
    const int64_t rows = name == std::string("mlp+relu") ? 1 : 6;
    Tensor in(rows, 3);
    for (auto& v : in.val) v = 2.0 * unit_double(rng) - 1.0;
    const auto report = nn::grad_check(net, in, name == std::string("mlp+relu") ? rows : 2);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("one-layer chain gradient is near machine precision") {
  Network net({LayerSpec::mlp({3, 2}, false)}, 12);
  Tensor in(1, 3);
  in.val = {0.3, -0.2, 0.9};
  const auto report = nn::grad_check(net, in, 1);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("the production encoder passes the gradient check at K=32") {
  Network net({LayerSpec::sapp(16, {3, 32, 64, 128}), LayerSpec::concat_input(),
               LayerSpec::smlp({3 + 128, 128, 256, 512, 16}, false), LayerSpec::pool()},
              31);
  Tensor in(32, 3);
  std::mt19937_64 rng(17);
  for (auto& v : in.val) v = unit_double(rng);
  const auto report = nn::grad_check(net, in, 1, 1e-5, 250);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("Adam ignores zero gradients") {
  auto p = tensor_of({0.5, -0.25}, 1, 2, true);
  p->zero_grad();
  nn::Optimizer opt(nn::OptimizerKind::kAdam, {p}, {});
  const auto before = p->val;
  opt.step();
  CHECK(std::abs(p->val[0] - before[0]) < opt.options().learning_rate);
  CHECK(std::abs(p->val[1] - before[1]) < opt.options().learning_rate);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("first Adam step moves by one learning rate") {
  auto p = tensor_of({1.0}, 1, 1, true);
  p->zero_grad();
  p->grad[0] = 0.37;
  nn::OptimizerOptions opts;
  opts.learning_rate = 1e-3;
  nn::Optimizer opt(nn::OptimizerKind::kAdam, {p}, opts);
  opt.step();
  CHECK(std::abs(1.0 - p->val[0]) == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("two optimizer steps shrink a quadratic") {
  for (auto kind : {nn::OptimizerKind::kAdam, nn::OptimizerKind::kRmsprop}) {
    auto p = tensor_of({1.0}, 1, 1, true);
    nn::OptimizerOptions opts;
    opts.learning_rate = 0.05;
    nn::Optimizer opt(kind, {p}, opts);
    double prev = std::abs(p->val[0]);
    for (int i = 0; i < 2; ++i) {
      p->zero_grad();
      p->grad[0] = p->val[0];  // d/dp of p^2/2
      opt.step();
      CHECK(std::abs(p->val[0]) < prev);
      prev = std::abs(p->val[0]);
    }
  }
}

TEST_CASE("parameter clipping bounds every entry") {
  auto p = tensor_of({0.5, -0.7, 0.003}, 1, 3, true);
  nn::clip_parameters({p}, 0.01);
  for (double v : p->val) CHECK(std::abs(v) <= 0.01);
  CHECK(p->val[2] == doctest::Approx(0.003));
}

TEST_CASE("weight files round-trip through 32-bit storage") {
  Network net({LayerSpec::smlp({3, 4, 2}, false)}, 77);
  const std::string path = "test_weights.ipdw";
  nn::save_weights(path, net.params());
  Network other({LayerSpec::smlp({3, 4, 2}, false)}, 78);
  nn::load_weights(path, other.params());
  for (size_t t = 0; t < net.params().size(); ++t)
    for (int64_t i = 0; i < net.params()[t]->size(); ++i)
      CHECK(other.params()[t]->val[i] ==
            static_cast<double>(static_cast<float>(net.params()[t]->val[i])));
  std::remove(path.c_str());
}

TEST_CASE("weight loader rejects mismatched shapes and bad files") {
  Network net({LayerSpec::smlp({3, 4}, false)}, 1);
  const std::string path = "test_weights_bad.ipdw";
  nn::save_weights(path, net.params());
  Network wider({LayerSpec::smlp({3, 5}, false)}, 1);
  CHECK_THROWS_AS(nn::load_weights(path, wider.params()), FormatError);
  // Corrupt the magic.
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(nn::load_weights(path, net.params()), FormatError);
  std::remove(path.c_str());
}
