#pragma once

#include "modkit/error.hpp"
#include "modkit/numerics.hpp"
#include "modkit/optimizer.hpp"
#include "modkit/graph.hpp"
#include "modkit/encoder.hpp"
#include "modkit/objectives.hpp"
#include "modkit/gradients.hpp"
#include "modkit/two_stage.hpp"
#include "modkit/gradcheck.hpp"
#include "modkit/generators.hpp"
#include "modkit/clustering.hpp"
#include "modkit/metrics.hpp"
#include "modkit/trainer.hpp"
#include "modkit/report.hpp"
