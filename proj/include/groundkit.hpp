#pragma once

#include "groundkit/errors.hpp"
#include "groundkit/geometry.hpp"
#include "groundkit/harness.hpp"
#include "groundkit/image.hpp"
#include "groundkit/methods.hpp"
#include "groundkit/model_client.hpp"
#include "groundkit/overlay.hpp"
#include "groundkit/pointing_game.hpp"
#include "groundkit/sample.hpp"
