#pragma once

#include "spi/classical.hpp"
#include "spi/encoding.hpp"
#include "spi/error.hpp"
#include "spi/fft.hpp"
#include "spi/field.hpp"
#include "spi/io.hpp"
#include "spi/measurement.hpp"
#include "spi/metrics.hpp"
#include "spi/network.hpp"
#include "spi/parallel.hpp"
#include "spi/pgm.hpp"
#include "spi/prior.hpp"
#include "spi/propagation.hpp"
#include "spi/scene.hpp"
#include "spi/pipeline.hpp"
