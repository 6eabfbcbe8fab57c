// Umbrella header.
#pragma once

#include "analysis.hpp"
#include "augment.hpp"
#include "checkpoint.hpp"
#include "common.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "ensemble.hpp"
#include "gradcheck.hpp"
#include "gradcheck_suite.hpp"
#include "graph.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "mix.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "tensor.hpp"
#include "train.hpp"
#include "tsne.hpp"
