#pragma once

// Point-cloud generative models for 2D flow fields: flow matching,
// denoising diffusion, and a deterministic regression baseline on a shared
// PointNet backbone, with an analytic potential-flow data generator.

#include "pfgen/autodiff.hpp"
#include "pfgen/baseline.hpp"
#include "pfgen/checkpoint.hpp"
#include "pfgen/conditioning.hpp"
#include "pfgen/csv.hpp"
#include "pfgen/dataset_io.hpp"
#include "pfgen/diffusion.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/evaluation.hpp"
#include "pfgen/flow_matching.hpp"
#include "pfgen/geometry.hpp"
#include "pfgen/noise.hpp"
#include "pfgen/parallel.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/run_config.hpp"
#include "pfgen/synthetic.hpp"
#include "pfgen/tensor.hpp"
#include "pfgen/training.hpp"
