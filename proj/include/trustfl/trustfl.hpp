#pragma once

#include "trustfl/adversary.hpp"
#include "trustfl/comm_graph.hpp"
#include "trustfl/config.hpp"
#include "trustfl/dataset.hpp"
#include "trustfl/error.hpp"
#include "trustfl/experiment.hpp"
#include "trustfl/model.hpp"
#include "trustfl/parallel.hpp"
#include "trustfl/param_vector.hpp"
#include "trustfl/protocols.hpp"
#include "trustfl/rng.hpp"
#include "trustfl/sgd.hpp"
#include "trustfl/topology.hpp"
#include "trustfl/trust_core.hpp"
#include "trustfl/trust_eval.hpp"
