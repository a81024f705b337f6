#pragma once

#include "fracsense/types.hpp"
#include "fracsense/kernels.hpp"
#include "fracsense/mesh.hpp"
#include "fracsense/forward.hpp"
#include "fracsense/observation.hpp"
#include "fracsense/glsm.hpp"
#include "fracsense/fod_inversion.hpp"
#include "fracsense/stiffness_inversion.hpp"
#include "fracsense/patterns.hpp"
#include "fracsense/config.hpp"
#include "fracsense/pipeline.hpp"
