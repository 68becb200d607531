#include "cdist/pruning.hpp"

#include "cdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdist {
namespace {

std::vector<int> top_l1(const std::vector<double>& norms, int keep) {
  if (keep < 1 || keep > static_cast<int>(norms.size()))
    throw ArgumentError("keep=" + std::to_string(keep) + " outside 1.." + std::to_string(norms.size()));
  std::vector<int> order(norms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return norms[a] > norms[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

double l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace

std::vector<int> select_filters_l1(std::span<const std::vector<double>> filters, int keep) {
  std::vector<double> norms;
  norms.reserve(filters.size());
  for (const auto& f : filters) norms.push_back(l1(f));
  return top_l1(norms, keep);
}

std::vector<int> select_filters_l1(const ConvParams& conv, int keep) {
  std::vector<double> norms;
  for (int o = 0; o < conv.out_channels; ++o) norms.push_back(l1(conv.filter(o)));
  return top_l1(norms, keep);
}

Network init_student_from_teacher(const Network& teacher, const ArchSpec& student_spec) {
  if (teacher.role() != NetworkRole::kEncoder) throw SpecError("student initialization needs a teacher encoder");
  student_spec.validate();
  const ArchSpec& ts = teacher.spec();
  if (ts.layout.size() != student_spec.layout.size()) throw SpecError("student and teacher stage counts differ");
  for (std::size_t s = 0; s < ts.layout.size(); ++s) {
    if (ts.layout[s].size() != student_spec.layout[s].size())
      throw SpecError("student and teacher layer counts differ in stage " + std::to_string(s + 1));
    for (std::size_t i = 0; i < ts.layout[s].size(); ++i)
      if (student_spec.layout[s][i] > ts.layout[s][i]) throw SpecError("student layer wider than teacher layer");
  }

  Network student(student_spec, NetworkRole::kEncoder);
  std::vector<int> prev_kept = {0, 1, 2};
  for (std::size_t li = 0; li < teacher.convs().size(); ++li) {
    const ConvParams& tc = teacher.convs()[li];
    ConvParams& sc = student.convs()[li];
    const std::vector<int> kept = select_filters_l1(tc, sc.out_channels);
    for (int o = 0; o < sc.out_channels; ++o) {
      for (int i = 0; i < sc.in_channels; ++i) {
        const double* src = tc.weight.data() + (static_cast<std::size_t>(kept[o]) * tc.in_channels + prev_kept[i]) * 9;
        double* dst = sc.weight.data() + (static_cast<std::size_t>(o) * sc.in_channels + i) * 9;
        std::copy(src, src + 9, dst);
      }
      sc.bias[o] = tc.bias[kept[o]];
    }
    prev_kept = kept;
  }
  return student;
}

}  // namespace cdist
