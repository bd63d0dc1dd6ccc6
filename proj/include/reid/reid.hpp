#pragma once

#include "reid/core.hpp"
#include "reid/evaluation.hpp"
#include "reid/feature_io.hpp"
#include "reid/kernels.hpp"
#include "reid/metrics.hpp"
#include "reid/parallel.hpp"
#include "reid/sparse_coding.hpp"
#include "reid/report.hpp"
