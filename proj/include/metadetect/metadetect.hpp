#pragma once

#include "metadetect/errors.hpp"
#include "metadetect/random.hpp"
#include "metadetect/mobility.hpp"
#include "metadetect/channel.hpp"
#include "metadetect/simcore.hpp"
#include "metadetect/metrics.hpp"
#include "metadetect/preprocess.hpp"
#include "metadetect/mrengine.hpp"
#include "metadetect/localize.hpp"
#include "metadetect/io.hpp"
#include "metadetect/config.hpp"
#include "metadetect/pipeline.hpp"
