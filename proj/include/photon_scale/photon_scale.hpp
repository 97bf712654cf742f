#pragma once

#include "photon_scale/dataset_pipeline.hpp"
#include "photon_scale/errors.hpp"
#include "photon_scale/formats.hpp"
#include "photon_scale/metrics.hpp"
#include "photon_scale/scale_space.hpp"
#include "photon_scale/sensor_model.hpp"
#include "photon_scale/synthetic.hpp"
#include "photon_scale/toy_net.hpp"
#include "photon_scale/training.hpp"
