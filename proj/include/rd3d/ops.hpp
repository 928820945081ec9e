#pragma once

#include "rd3d/ops/conv.hpp"
#include "rd3d/ops/elementwise.hpp"
#include "rd3d/ops/loss.hpp"
#include "rd3d/ops/norm.hpp"
#include "rd3d/ops/resample.hpp"
#include "rd3d/ops/runtime.hpp"
#include "rd3d/ops/shape.hpp"
