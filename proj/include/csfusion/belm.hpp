#pragma once

#include "csfusion/belm/checkpoint.hpp"
#include "csfusion/belm/config.hpp"
#include "csfusion/belm/decode.hpp"
#include "csfusion/belm/input.hpp"
#include "csfusion/belm/layers.hpp"
#include "csfusion/belm/model.hpp"
#include "csfusion/belm/train.hpp"
