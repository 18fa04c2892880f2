// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace vete {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Base class for everything the toolkit throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define VETE_ERROR_TYPE(Name) \
  struct Name : Error {       \
    using Error::Error;       \
  }

// corpus
VETE_ERROR_TYPE(EmptyCaption);
VETE_ERROR_TYPE(TooFewRecords);
VETE_ERROR_TYPE(FormatError);
// encoders
VETE_ERROR_TYPE(EmptyInput);
VETE_ERROR_TYPE(DegenerateEmbedding);
VETE_ERROR_TYPE(ShapeError);
VETE_ERROR_TYPE(DegenerateVector);
// contrastive
VETE_ERROR_TYPE(BatchTooSmall);
VETE_ERROR_TYPE(DegenerateSimilarities);
// optim
VETE_ERROR_TYPE(NonFiniteGradient);
VETE_ERROR_TYPE(DataError);
VETE_ERROR_TYPE(UnsupportedConfiguration);
// eval
VETE_ERROR_TYPE(DegenerateInput);
VETE_ERROR_TYPE(EvaluationImpossible);
VETE_ERROR_TYPE(TooFewPairs);
VETE_ERROR_TYPE(EmptyReport);
// search
VETE_ERROR_TYPE(SearchFailed);
// config / io
VETE_ERROR_TYPE(ConfigError);
VETE_ERROR_TYPE(IoError);

#undef VETE_ERROR_TYPE

}  // namespace vete
