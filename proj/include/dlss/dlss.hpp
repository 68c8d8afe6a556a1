/// @file dlss.hpp
/// @brief Umbrella header for the solver library.

#pragma once

#include "dlss/elliptic.hpp"
#include "dlss/errors.hpp"
#include "dlss/fisher.hpp"
#include "dlss/grid.hpp"
#include "dlss/io.hpp"
#include "dlss/lab.hpp"
#include "dlss/manifest.hpp"
#include "dlss/newton.hpp"
#include "dlss/stepper.hpp"
