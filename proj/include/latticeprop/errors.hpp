#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace latticeprop {

// Every failure carries a stable symbolic name. The CLI prints the name on
// stderr and maps it to a documented exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define LATTICEPROP_ERROR(NAME)                                       \
  class NAME : public Error {                                         \
   public:                                                            \
    explicit NAME(const std::string& what) : Error(#NAME, what) {}    \
  }

LATTICEPROP_ERROR(ZeroDimension);
LATTICEPROP_ERROR(NonDivisible);
LATTICEPROP_ERROR(NodeOutOfRange);
LATTICEPROP_ERROR(NonFiniteLogit);
LATTICEPROP_ERROR(LatticeMismatch);
LATTICEPROP_ERROR(ShapeMismatch);
LATTICEPROP_ERROR(CenterNotForeground);
LATTICEPROP_ERROR(BoxOutOfBounds);
LATTICEPROP_ERROR(DegenerateBox);
LATTICEPROP_ERROR(EmptyCluster);
LATTICEPROP_ERROR(CycleDetected);
LATTICEPROP_ERROR(AllPruned);
LATTICEPROP_ERROR(PlacementFailed);
LATTICEPROP_ERROR(IoError);

#undef LATTICEPROP_ERROR

}  // namespace latticeprop
