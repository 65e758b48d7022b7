#pragma once

#include "metroint/brownian.hpp"
#include "metroint/coupling.hpp"
#include "metroint/experiment.hpp"
#include "metroint/equilibrium.hpp"
#include "metroint/inertial.hpp"
#include "metroint/initial_condition.hpp"
#include "metroint/model.hpp"
#include "metroint/overdamped.hpp"
#include "metroint/parallel.hpp"
#include "metroint/regression.hpp"
#include "metroint/rejection_rate.hpp"
#include "metroint/rng.hpp"
#include "metroint/strong_error.hpp"
