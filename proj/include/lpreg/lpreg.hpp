#pragma once

// Facade registration by MAP-EM over a similarity transform, with an Lp
// Gaussian mixture model of the reference facade and joint refinement of the
// target's semantic segmentation.

#include "lpreg/density.hpp"
#include "lpreg/em.hpp"
#include "lpreg/io.hpp"
#include "lpreg/objective.hpp"
#include "lpreg/point_extraction.hpp"
#include "lpreg/posterior.hpp"
#include "lpreg/reduced_objective.hpp"
#include "lpreg/reference_fit.hpp"
#include "lpreg/synth.hpp"
#include "lpreg/transform.hpp"
#include "lpreg/types.hpp"
