#pragma once

// Everything in one include.

#include "wcgen/error.hpp"
#include "wcgen/geometry.hpp"
#include "wcgen/image.hpp"
#include "wcgen/hash.hpp"
#include "wcgen/codec.hpp"
#include "wcgen/trajwarp.hpp"
#include "wcgen/viewwarp.hpp"
#include "wcgen/panorama.hpp"
#include "wcgen/backend.hpp"
#include "wcgen/protocol.hpp"
#include "wcgen/remote.hpp"
#include "wcgen/pipeline.hpp"
#include "wcgen/dataio.hpp"
