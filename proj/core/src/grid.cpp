#include "glamap/grid.hpp"

namespace glamap {

template class Grid<uint8_t>;
template class Grid<int>;
template class Grid<float>;
template class Grid<double>;

}  // namespace glamap
