#pragma once

#include <string>
#include <vector>

#include "ibrl/common.hpp"

namespace ibrl {

// One named matrix-shaped segment inside a flat parameter vector.
struct ParamSegment {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(rows) * cols;
  }
};

// Flat parameter storage plus the layout mapping segments (layer weights,
// biases, ...) into it. The layout is fixed at construction and stays stable
// across optimization steps.
class ParamVector {
 public:
  ParamVector() = default;

  void push_segment(const std::string& name, int rows, int cols) {
    require(rows > 0 && cols > 0, "ParamVector: segment dims must be positive");
    ParamSegment seg{name, rows, cols, values_.size()};
    Vector grown(values_.size() + seg.size());
    grown.head(values_.size()) = values_;
    grown.tail(seg.size()).setZero();
    values_ = std::move(grown);
    segments_.push_back(seg);
  }

  Eigen::Index size() const { return values_.size(); }
  const std::vector<ParamSegment>& segments() const { return segments_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  // Column-major view of one segment as a matrix.
  Matrix segment_matrix(std::size_t i) const {
    const ParamSegment& seg = segments_.at(i);
    return Eigen::Map<const Matrix>(values_.data() + seg.offset, seg.rows,
                                    seg.cols);
  }

  void set_segment(std::size_t i, const Matrix& m) {
    const ParamSegment& seg = segments_.at(i);
    require(m.rows() == seg.rows && m.cols() == seg.cols,
            "ParamVector: segment shape mismatch");
    Eigen::Map<Matrix>(values_.data() + seg.offset, seg.rows, seg.cols) = m;
  }

 private:
  Vector values_{0};
  std::vector<ParamSegment> segments_;
};

}  // namespace ibrl
