#pragma once

#include "crystalseg/core.hpp"
#include "crystalseg/features.hpp"
#include "crystalseg/forest.hpp"
#include "crystalseg/imgio.hpp"
#include "crystalseg/metrics.hpp"
#include "crystalseg/preprocess.hpp"
#include "crystalseg/regions.hpp"
#include "crystalseg/segment.hpp"
#include "crystalseg/spectral.hpp"
#include "crystalseg/synth.hpp"
#include "crystalseg/util.hpp"
