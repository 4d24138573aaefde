#pragma once

#include "eedit/bonus.hpp"
#include "eedit/cache.hpp"
#include "eedit/config_io.hpp"
#include "eedit/edit_config.hpp"
#include "eedit/errors.hpp"
#include "eedit/flow.hpp"
#include "eedit/grid.hpp"
#include "eedit/model.hpp"
#include "eedit/pipeline.hpp"
#include "eedit/plan.hpp"
#include "eedit/prng.hpp"
#include "eedit/scoring.hpp"
#include "eedit/tensor_io.hpp"
