namespace histent {}
