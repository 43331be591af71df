#pragma once

#include "probcast/binning.hpp"
#include "probcast/core/error.hpp"
#include "probcast/core/parallel.hpp"
#include "probcast/core/random.hpp"
#include "probcast/ensemble.hpp"
#include "probcast/exploration.hpp"
#include "probcast/grid.hpp"
#include "probcast/io/density_file.hpp"
#include "probcast/io/gfb1.hpp"
#include "probcast/model/resnet.hpp"
#include "probcast/model/schedule.hpp"
#include "probcast/model/training.hpp"
#include "probcast/pipeline.hpp"
#include "probcast/stacking.hpp"
#include "probcast/synth.hpp"
#include "probcast/verification/contours.hpp"
#include "probcast/verification/report.hpp"
#include "probcast/verification/scores.hpp"
#include "probcast/verification/weighted.hpp"
