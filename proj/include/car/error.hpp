#pragma once

#include <stdexcept>
#include <string>

namespace car {

// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CAR_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  }

// gridworld / blockpush
CAR_DEFINE_ERROR(InvalidSpec);
CAR_DEFINE_ERROR(Unsolvable);

// imaging
CAR_DEFINE_ERROR(UnknownColor);
CAR_DEFINE_ERROR(Degenerate);

// verifier / rewarder / trainer
CAR_DEFINE_ERROR(InvalidArtifacts);
CAR_DEFINE_ERROR(TrajectoryMismatch);
CAR_DEFINE_ERROR(UnverifiedArtifacts);
CAR_DEFINE_ERROR(NotInitialized);
CAR_DEFINE_ERROR(InvalidConfig);

// datastore
CAR_DEFINE_ERROR(IntegrityError);
CAR_DEFINE_ERROR(IoError);
CAR_DEFINE_ERROR(SchemaError);

#undef CAR_DEFINE_ERROR

}  // namespace car
