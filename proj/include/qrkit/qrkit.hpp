#pragma once

// Everything except the benchmark harness (qrkit/bench/*, which needs zlib
// and nlohmann/json).

#include <qrkit/core/dense_matrix.hpp>
#include <qrkit/core/errors.hpp>
#include <qrkit/core/matrix_market.hpp>
#include <qrkit/core/parallel.hpp>
#include <qrkit/core/permutation.hpp>
#include <qrkit/core/structured_matrix.hpp>
#include <qrkit/lm/cholesky.hpp>
#include <qrkit/lm/config.hpp>
#include <qrkit/lm/drivers.hpp>
#include <qrkit/lm/problem.hpp>
#include <qrkit/lm/step_solvers.hpp>
#include <qrkit/lm/trace.hpp>
#include <qrkit/permutation_heuristics.hpp>
#include <qrkit/problems/bundle_adjustment.hpp>
#include <qrkit/problems/dual.hpp>
#include <qrkit/problems/ellipse.hpp>
#include <qrkit/qr/block_banded_qr.hpp>
#include <qrkit/qr/block_diagonal_qr.hpp>
#include <qrkit/qr/horzcat_qr.hpp>
#include <qrkit/qr/householder.hpp>
#include <qrkit/qr/qr_solver.hpp>
#include <qrkit/qr/vertcat_qr.hpp>
