#pragma once

#include "sdm/camera.hpp"
#include "sdm/dictionary.hpp"
#include "sdm/dictionary_learning.hpp"
#include "sdm/errors.hpp"
#include "sdm/io.hpp"
#include "sdm/metrics.hpp"
#include "sdm/pose.hpp"
#include "sdm/rng.hpp"
#include "sdm/solver.hpp"
#include "sdm/synthetic.hpp"
