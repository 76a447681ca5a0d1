namespace conc {
namespace reduced_detail {
int placeholder = 0;
}
}
