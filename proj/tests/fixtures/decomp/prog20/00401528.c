void * FUN_00401528(int param_1)
{
  void *pvVar1;

  if ((param_1 < 1) || (1000 < param_1)) {
    pvVar1 = (void *)0x0;
  }
  else {
    pvVar1 = calloc((long)param_1,4);
  }
  return pvVar1;
}
