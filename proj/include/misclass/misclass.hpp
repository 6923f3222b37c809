#pragma once

// Umbrella header for the misclassification-adjustment library.

#include "misclass/config.hpp"
#include "misclass/csv.hpp"
#include "misclass/errors.hpp"
#include "misclass/experiments.hpp"
#include "misclass/glm.hpp"
#include "misclass/importance.hpp"
#include "misclass/latent_gaussian.hpp"
#include "misclass/math.hpp"
#include "misclass/model.hpp"
#include "misclass/oracle.hpp"
#include "misclass/parallel.hpp"
#include "misclass/report.hpp"
#include "misclass/response.hpp"
#include "misclass/rng.hpp"
#include "misclass/simulate.hpp"
