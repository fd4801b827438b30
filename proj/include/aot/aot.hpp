#pragma once

// Umbrella header for the Analytic Ontology Template library.

#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/dual.hpp"
#include "aot/templates.hpp"
#include "aot/structure.hpp"
#include "aot/instance.hpp"
#include "aot/canonical.hpp"
#include "aot/joint.hpp"
#include "aot/affordance.hpp"
#include "aot/cloud.hpp"
#include "aot/io.hpp"
#include "aot/kdtree.hpp"
#include "aot/hull.hpp"
#include "aot/parallel.hpp"
#include "aot/renderer.hpp"
#include "aot/fitter.hpp"
#include "aot/kinematics.hpp"
#include "aot/dataset.hpp"
#include "aot/discovery.hpp"
#include "aot/config.hpp"
