#include <pybind11/pybind11.h>

#include "dualband/channel.hpp"

namespace py = pybind11;

// grows with the library; full surface added once all modules are in place
PYBIND11_MODULE(_core, m) {
  m.doc() = "dual-band link simulator core";
  m.def("pathloss_intercept_db", &dualband::pathloss_intercept_db, py::arg("carrier_hz"));
}
