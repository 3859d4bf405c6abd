#pragma once

#include "bsc/backbone/backbone.hpp"
#include "bsc/dataset/augment.hpp"
#include "bsc/dataset/bands.hpp"
#include "bsc/dataset/manifest.hpp"
#include "bsc/grid/grid.hpp"
#include "bsc/heads/model.hpp"
#include "bsc/heads/pooling.hpp"
#include "bsc/heads/train.hpp"
#include "bsc/image.hpp"
#include "bsc/image_ops.hpp"
#include "bsc/io/checkpoint.hpp"
#include "bsc/io/netpbm.hpp"
#include "bsc/metrics/metrics.hpp"
#include "bsc/prob_map.hpp"
#include "bsc/ssnet/ssnet.hpp"
#include "bsc/ssnet/train.hpp"
#include "bsc/synthgen/synthgen.hpp"
