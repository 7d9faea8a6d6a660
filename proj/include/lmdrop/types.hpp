#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>

namespace lmdrop {

// Row-major so that a single occasion's covariates are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Family { gaussian, bernoulli };
enum class Link { identity, logit, cloglog };

std::string_view to_string(Family f);
std::string_view to_string(Link l);
Family parse_family(std::string_view s);
Link parse_link(std::string_view s);

}  // namespace lmdrop
