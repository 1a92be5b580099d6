#pragma once

#include "cleanfield/camera.hpp"
#include "cleanfield/commands.hpp"
#include "cleanfield/config.hpp"
#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/image.hpp"
#include "cleanfield/io.hpp"
#include "cleanfield/metrics.hpp"
#include "cleanfield/parallel.hpp"
#include "cleanfield/render.hpp"
#include "cleanfield/scenes.hpp"
#include "cleanfield/sh.hpp"
#include "cleanfield/train.hpp"
