void FUN_00001160(char *param_1)
{
  syslog(3,param_1);
  return;
}
