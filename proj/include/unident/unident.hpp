#pragma once

#include "unident/error.hpp"
#include "unident/numerics.hpp"
#include "unident/random.hpp"
#include "unident/system_model.hpp"
#include "unident/sensitivity.hpp"
#include "unident/identifiability.hpp"
#include "unident/controller.hpp"
#include "unident/adversary.hpp"
#include "unident/io.hpp"
