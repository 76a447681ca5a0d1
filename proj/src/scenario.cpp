namespace conc {
namespace scenario_detail {
int placeholder = 0;
}
}
