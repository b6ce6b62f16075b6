#pragma once

#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "embnmt/autodiff.hpp"
#include "test_support.hpp"

namespace embnmt::fixture {

using ad::Tape;
using ad::Tensor;
using ad::Var;

inline Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
  return Tensor(r, c, fixture::random_vector(rng, r * c, lo, hi));
}

// Weighted sum turns any tensor into a scalar with non-trivial upstream gradient.
inline Var reduce(Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto s = v.shape();
  return ad::sum(ad::mul(v, v.tape().constant(random_tensor(rng, s.rows, s.cols))));
}

struct PrimitiveCase {
  const char* name;
  std::function<Var(Var)> f;
  std::size_t rows, cols;
  double lo = -1.0, hi = 1.0;
};

// Keeps discovered test names readable.
inline void PrintTo(const PrimitiveCase& c, std::ostream* os) { *os << c.name; }

inline Tensor fixed(std::uint64_t seed, std::size_t r, std::size_t c) {
  std::mt19937_64 rng(seed);
  return random_tensor(rng, r, c);
}

// One case per primitive, each reduced to a scalar.
inline std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"matmul_left", [](Var x) { return reduce(ad::matmul(x, x.tape().constant(fixed(1, 4, 2))), 9); }, 3, 4},
      {"matmul_right", [](Var x) { return reduce(ad::matmul(x.tape().constant(fixed(2, 3, 4)), x), 9); }, 4, 2},
      {"matmul_transposed",
       [](Var x) { return reduce(ad::matmul(x.tape().constant(fixed(3, 3, 4)), x, true), 9); }, 5, 4},
      {"matmul_self", [](Var x) { return reduce(ad::matmul(x, x), 9); }, 3, 3},
      {"add_broadcast", [](Var x) { return reduce(ad::add(x, x.tape().constant(fixed(4, 1, 5))), 8); }, 3, 5},
      {"add_bias_row", [](Var x) { return reduce(ad::add(x.tape().constant(fixed(5, 3, 4)), x), 8); }, 1, 4},
      {"sub", [](Var x) { return reduce(ad::sub(x.tape().constant(fixed(6, 2, 3)), x), 7); }, 2, 3},
      {"mul", [](Var x) { return reduce(ad::mul(x, ad::tanh(x)), 7); }, 2, 3},
      {"mul_broadcast_col", [](Var x) { return reduce(ad::mul(x.tape().constant(fixed(7, 3, 4)), x), 7); }, 3, 1},
      {"tanh", [](Var x) { return reduce(ad::tanh(x), 6); }, 2, 4, -2, 2},
      {"sigmoid", [](Var x) { return reduce(ad::sigmoid(x), 6); }, 2, 4, -3, 3},
      {"concat",
       [](Var x) {
         Var parts[] = {x, x.tape().constant(fixed(8, 2, 2)), ad::tanh(x)};
         return reduce(ad::concat(parts), 5);
       },
       2, 3},
      {"slice", [](Var x) { return reduce(ad::slice(x, 1, 4), 5); }, 3, 5},
      {"softmax", [](Var x) { return reduce(ad::softmax(x), 4); }, 3, 5, -3, 3},
      {"log", [](Var x) { return reduce(ad::log(x), 4); }, 2, 3, 0.5, 2.0},
      {"sum", [](Var x) { return ad::sum(ad::mul(x, x)); }, 2, 3},
      {"row_sum", [](Var x) { return reduce(ad::row_sum(ad::mul(x, x)), 3); }, 3, 4},
      {"mean", [](Var x) { return ad::mean(ad::mul(x, ad::sigmoid(x))); }, 3, 4},
      {"dropout_frozen_mask",
       [](Var x) { return reduce(ad::dropout(x, Tensor(2, 3, {1, 0, 1, 1, 1, 0}), 0.3), 2); }, 2, 3},
      {"embedding_lookup",
       [](Var x) {
         const std::vector<WordId> ids{2, 0, 2, 4};
         return reduce(ad::embedding_lookup(x, ids), 2);
       },
       5, 3},
      {"scale", [](Var x) { return reduce(ad::scale(x, -1.75), 1); }, 2, 2},
      {"three_layer_tanh_net",
       [](Var x) {
         Tape& t = x.tape();
         Var h = ad::tanh(ad::matmul(x, t.constant(fixed(11, 4, 5))));
         h = ad::tanh(ad::add(ad::matmul(h, t.constant(fixed(12, 5, 5))), t.constant(fixed(13, 1, 5))));
         h = ad::tanh(ad::matmul(h, t.constant(fixed(14, 5, 2))));
         return ad::sum(h);
       },
       3, 4},
  };
}

}  // namespace embnmt::fixture
