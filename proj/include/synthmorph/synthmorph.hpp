#pragma once

// Umbrella header.

#include "autodiff.hpp"
#include "deform.hpp"
#include "grid.hpp"
#include "imagesynth.hpp"
#include "io.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "sampling.hpp"
#include "shapegen.hpp"
#include "trainer.hpp"
