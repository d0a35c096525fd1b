#pragma once

#include "chainperturb/bounds.hpp"
#include "chainperturb/coupling.hpp"
#include "chainperturb/csv.hpp"
#include "chainperturb/errors.hpp"
#include "chainperturb/experiment_io.hpp"
#include "chainperturb/gp_mcmc.hpp"
#include "chainperturb/kernel.hpp"
#include "chainperturb/kernel_io.hpp"
#include "chainperturb/montecarlo.hpp"
#include "chainperturb/numeric.hpp"
#include "chainperturb/parallel.hpp"
#include "chainperturb/rng.hpp"
#include "chainperturb/sharpness.hpp"
