// Expands a bottleneck network along a random line and prints how far the
// degree-2 jet is from the exact curve at a few widths.
//
//   ./build/samples/taylor_gap [radius]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "bnn/bnn.hpp"

int main(int argc, char** argv) {
  const double radius = argc > 1 ? std::atof(argv[1]) : 1.0;
  const bnn::InputVector x = bnn::InputVector::basis(2, 0, 1.0);

  std::printf("%8s %14s %14s %14s\n", "m", "g(w0)", "c2", "|R3(1)|");
  for (bnn::Index m : {64, 256, 1024, 4096}) {
    const bnn::NetworkSpec spec = bnn::NetworkSpec::single_bottleneck(2, 1, 1, m);
    const bnn::WeightSet w = bnn::init_weights(spec, 1);
    const bnn::Direction delta = bnn::sample_direction(spec, 2, radius);
    const bnn::PolyCurve curve = bnn::poly_expand(w, delta, x);
    std::printf("%8lld %14.6g %14.6g %14.6g\n", static_cast<long long>(m), curve.coeff(0), curve.coeff(2),
                std::abs(bnn::remainder(curve, 1.0, 2)));
  }

  // The cross-block Hessian witness has a closed form when x is along e1.
  const bnn::NetworkSpec spec = bnn::NetworkSpec::single_bottleneck(2, 1, 1, 512);
  const bnn::Theorem1Witness wit = bnn::witness_vector_theorem1(bnn::init_weights(spec, 3), x);
  std::printf("witness %.6g (closed form %.6g, lower bound %.6g)\n", wit.rayleigh, *wit.closed_form,
              bnn::bound_H_lower(1, 2, x.norm()));
  return 0;
}
