#pragma once

namespace gatta {

#ifdef GATTA_DOUBLE
using real = double;
#else
using real = float;
#endif

}  // namespace gatta
