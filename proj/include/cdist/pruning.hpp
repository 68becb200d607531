#pragma once

#include "cdist/network.hpp"

#include <span>
#include <vector>

namespace cdist {

/// Indices of the `keep` filters with the largest L1 norm, returned in
/// ascending index order. Ties go to the lower index.
std::vector<int> select_filters_l1(std::span<const std::vector<double>> filters, int keep);

/// Same rule over the output filters of one convolution.
std::vector<int> select_filters_l1(const ConvParams& conv, int keep);

/// Builds a narrower encoder whose every convolution keeps the teacher's
/// largest-L1 output filters, with input channels sliced to the filters kept
/// by the previous layer (all three RGB channels for the first layer).
Network init_student_from_teacher(const Network& teacher, const ArchSpec& student_spec);

}  // namespace cdist
