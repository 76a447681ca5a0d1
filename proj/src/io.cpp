namespace conc {
namespace io_detail {
int placeholder = 0;
}
}
