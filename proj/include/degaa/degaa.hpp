#pragma once

#include "degaa/adaptation.hpp"
#include "degaa/backbone.hpp"
#include "degaa/config.hpp"
#include "degaa/dataset.hpp"
#include "degaa/domain_embedding.hpp"
#include "degaa/errors.hpp"
#include "degaa/graph_attention.hpp"
#include "degaa/lof.hpp"
#include "degaa/mlp.hpp"
#include "degaa/optim.hpp"
#include "degaa/pipeline.hpp"
#include "degaa/rng.hpp"
#include "degaa/serialize.hpp"
#include "degaa/tensor.hpp"
