#pragma once

#include "nce/error.hpp"
#include "nce/numeric.hpp"
#include "nce/rng.hpp"
#include "nce/parallel.hpp"
#include "nce/model.hpp"
#include "nce/sampling.hpp"
#include "nce/objectives.hpp"
#include "nce/evaluation.hpp"
#include "nce/optimize.hpp"
#include "nce/asymptotics.hpp"
#include "nce/experiments.hpp"
#include "nce/io.hpp"
#include "nce/lm.hpp"
