void FUN_00401266(char *param_1)
{
  int iVar1;
  int local_10;

  iVar1 = atoi(param_1);
  for (local_10 = 0; local_10 < iVar1; local_10 = local_10 + 1) {
    FUN_00401251(local_10);
  }
  return;
}
