#pragma once

#include "uqseg/augment.hpp"
#include "uqseg/checkpoint.hpp"
#include "uqseg/config.hpp"
#include "uqseg/conv.hpp"
#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/fusion.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/harness.hpp"
#include "uqseg/image_io.hpp"
#include "uqseg/laplace.hpp"
#include "uqseg/metrics.hpp"
#include "uqseg/optim.hpp"
#include "uqseg/preprocess.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/synthgen.hpp"
#include "uqseg/train.hpp"
#include "uqseg/uq.hpp"
#include "uqseg/variance_head.hpp"
