#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "synthct/error.hpp"

namespace synthct {

/// Element-wise mean of equal-length vectors, accumulated as first + mean of
/// differences from the first. k identical inputs therefore give back the
/// input bit-for-bit, which a plain sum / k does not.
class MeanAccumulator {
 public:
  void add(std::span<const double> x) {
    if (count_ == 0) {
      anchor_.assign(x.begin(), x.end());
      diff_.assign(x.size(), 0.0);
    } else {
      if (x.size() != anchor_.size()) throw Error(ErrorKind::InvalidParameter, "vectors differ in length");
      for (std::size_t i = 0; i < x.size(); ++i) diff_[i] += x[i] - anchor_[i];
    }
    ++count_;
  }

  std::size_t count() const noexcept { return count_; }

  std::vector<double> mean() const {
    std::vector<double> out(anchor_);
    const double k = static_cast<double>(count_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += diff_[i] / k;
    return out;
  }

 private:
  std::vector<double> anchor_;
  std::vector<double> diff_;
  std::size_t count_ = 0;
};

}  // namespace synthct
