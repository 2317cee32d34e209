#pragma once

#include "glance/errors.hpp"
#include "glance/polynomial.hpp"
#include "glance/phase_space.hpp"
#include "glance/symplectic.hpp"
#include "glance/integrator.hpp"
#include "glance/flow.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/manifolds.hpp"
#include "glance/glancing.hpp"
#include "glance/genfam.hpp"
#include "glance/quadrature.hpp"
#include "glance/semiclassical.hpp"
#include "glance/normal_form.hpp"
