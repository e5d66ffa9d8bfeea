#pragma once

#include "aad/error.hpp"
#include "aad/core_io.hpp"
#include "aad/dsp.hpp"
#include "aad/linalg.hpp"
#include "aad/cca.hpp"
#include "aad/classify.hpp"
#include "aad/metrics.hpp"
#include "aad/pipeline.hpp"
#include "aad/synth.hpp"
#include "aad/eval.hpp"
