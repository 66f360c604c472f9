/**
 * @file shadow.hpp
 * @brief Everything: systems, shadowing solvers, splittings, responses, I/O.
 */
#pragma once

#include "shadow/core.hpp"
#include "shadow/systems.hpp"
#include "shadow/fields.hpp"
#include "shadow/nonintrusive.hpp"
#include "shadow/tangent.hpp"
#include "shadow/adjoint.hpp"
#include "shadow/splitting.hpp"
#include "shadow/response.hpp"
#include "shadow/container.hpp"
#include "shadow/config.hpp"
#include "shadow/validation.hpp"
