#pragma once

#include "plsearch/binary.hpp"
#include "plsearch/dynseg.hpp"
#include "plsearch/error.hpp"
#include "plsearch/histogram.hpp"
#include "plsearch/index_io.hpp"
#include "plsearch/pla.hpp"
#include "plsearch/sampling.hpp"
#include "plsearch/search.hpp"
#include "plsearch/signal_features.hpp"
#include "plsearch/synthetic.hpp"
#include "plsearch/tas.hpp"
#include "plsearch/vq.hpp"
