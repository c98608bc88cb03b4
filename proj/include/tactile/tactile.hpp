#pragma once

#include "tactile/geometry.hpp"
#include "tactile/amplitude.hpp"
#include "tactile/dynamics.hpp"
#include "tactile/protocol.hpp"
#include "tactile/clock.hpp"
#include "tactile/device.hpp"
#include "tactile/playback.hpp"
#include "tactile/perceiver.hpp"
#include "tactile/experiment.hpp"
#include "tactile/trial.hpp"
#include "tactile/session_io.hpp"
#include "tactile/layout_file.hpp"
