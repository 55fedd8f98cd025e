#pragma once
// Everything except the command-line front end (cli.hpp, which needs CLI11).

#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "experiment_log.hpp"
#include "flatness.hpp"
#include "kfac.hpp"
#include "linalg.hpp"
#include "loss.hpp"
#include "metric.hpp"
#include "network.hpp"
#include "optimizers.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "riemann_descent.hpp"
#include "rkhs.hpp"
#include "rng.hpp"
#include "sobolev_kernel.hpp"
#include "verify.hpp"
