void FUN_00401136(char *param_1)
{
  if (param_1 != (char *)0x0) {
    puts(param_1);
  }
  return;
}
