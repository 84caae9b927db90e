#pragma once

#include "tmdmap/bvp.hpp"
#include "tmdmap/error.hpp"
#include "tmdmap/experiments.hpp"
#include "tmdmap/generator.hpp"
#include "tmdmap/io.hpp"
#include "tmdmap/kernel.hpp"
#include "tmdmap/parallel.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"
#include "tmdmap/reference.hpp"
#include "tmdmap/rng.hpp"
#include "tmdmap/sampling.hpp"
#include "tmdmap/spatial_hash.hpp"
#include "tmdmap/tpt.hpp"
