#pragma once

#include "dists/backbone.hpp"
#include "dists/dataset.hpp"
#include "dists/errors.hpp"
#include "dists/eval.hpp"
#include "dists/fixtures.hpp"
#include "dists/geometry.hpp"
#include "dists/image.hpp"
#include "dists/manifest.hpp"
#include "dists/metric.hpp"
#include "dists/optim.hpp"
#include "dists/parallel.hpp"
#include "dists/synthesis.hpp"
#include "dists/tape.hpp"
#include "dists/tensor.hpp"
#include "dists/weight_file.hpp"
