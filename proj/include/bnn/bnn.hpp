#ifndef BNN_BNN_HPP
#define BNN_BNN_HPP

#include "bnn/bounds.hpp"
#include "bnn/config.hpp"
#include "bnn/core.hpp"
#include "bnn/harness.hpp"
#include "bnn/multilinear.hpp"
#include "bnn/network.hpp"
#include "bnn/parallel.hpp"
#include "bnn/report.hpp"
#include "bnn/rng.hpp"
#include "bnn/stats.hpp"
#include "bnn/tensor.hpp"
#include "bnn/weights_io.hpp"

#endif  // BNN_BNN_HPP
