#pragma once

#include "vbgs/autograd.hpp"
#include "vbgs/bench.hpp"
#include "vbgs/degrade.hpp"
#include "vbgs/errors.hpp"
#include "vbgs/gaussian_model.hpp"
#include "vbgs/image.hpp"
#include "vbgs/io.hpp"
#include "vbgs/metrics.hpp"
#include "vbgs/parallel.hpp"
#include "vbgs/render.hpp"
#include "vbgs/resample.hpp"
#include "vbgs/sde.hpp"
#include "vbgs/selection.hpp"
