#pragma once

#include "rock/errors.hpp"
#include "rock/math.hpp"
#include "rock/shell.hpp"
#include "rock/terrain.hpp"
#include "rock/dynamics.hpp"
#include "rock/projection.hpp"
#include "rock/observation.hpp"
#include "rock/mlp.hpp"
#include "rock/policy.hpp"
#include "rock/quantized.hpp"
#include "rock/checkpoint.hpp"
#include "rock/env.hpp"
#include "rock/parallel.hpp"
#include "rock/ppo.hpp"
#include "rock/trajectory.hpp"
#include "rock/harness.hpp"
#include "rock/config.hpp"
#include "rock/teleop.hpp"
#include "rock/teleop_server.hpp"
#include "rock/app.hpp"
