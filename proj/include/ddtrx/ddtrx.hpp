#pragma once

#include "ddtrx/abc.hpp"
#include "ddtrx/data_matrix.hpp"
#include "ddtrx/ddt_gen.hpp"
#include "ddtrx/diagnostics.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/hclust.hpp"
#include "ddtrx/ingest.hpp"
#include "ddtrx/io.hpp"
#include "ddtrx/likelihood.hpp"
#include "ddtrx/mh.hpp"
#include "ddtrx/parallel.hpp"
#include "ddtrx/pipeline.hpp"
#include "ddtrx/rng.hpp"
#include "ddtrx/stats.hpp"
#include "ddtrx/summaries.hpp"
#include "ddtrx/tree.hpp"
#include "ddtrx/tree_cov.hpp"
#include "ddtrx/ultrametric.hpp"
