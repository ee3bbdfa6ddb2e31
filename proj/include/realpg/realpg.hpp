#pragma once

#include "realpg/checkpoint.hpp"
#include "realpg/commands.hpp"
#include "realpg/config.hpp"
#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/estimator.hpp"
#include "realpg/infer.hpp"
#include "realpg/metrics.hpp"
#include "realpg/optimizer.hpp"
#include "realpg/oracle.hpp"
#include "realpg/parallel.hpp"
#include "realpg/policy.hpp"
#include "realpg/reward.hpp"
#include "realpg/rng.hpp"
#include "realpg/trainer.hpp"
#include "realpg/verify.hpp"
